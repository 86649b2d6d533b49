//! Report serialization: stats tables, breakdown tables, per-session plot
//! data and the error-draw ledger.

use std::io;

use telelat_core::breakdown::{BreakdownTable, Chain};
use telelat_core::clocks::{Alignment, OffsetStats};
use telelat_core::events::{EventLog, Timestamp};
use telelat_core::latency::{aggregate, decompose, LatencyStats, SessionStats};
use telelat_core::sim::SessionLedger;

const QUARTILE_METHOD: &str = "linear interpolation between closest ranks";

pub fn ledger_jsonl(ledgers: &[SessionLedger]) -> io::Result<Vec<u8>> {
    let mut out = Vec::new();
    for ledger in ledgers {
        serde_json::to_writer(&mut out, ledger)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn stats_row(label: &str, s: &LatencyStats) -> String {
    format!(
        "{label},{},{},{},{},{},{},{},{}\n",
        s.min_ms, s.max_ms, s.mean_ms, s.std_ms, s.median_ms, s.iqr_ms, s.n, s.excluded
    )
}

pub fn stats_csv(
    stats: &SessionStats,
    labels: &[&str; 3],
    error_stats: Option<&SessionStats>,
) -> String {
    let mut out = String::new();
    out.push_str(&format!("# quartile_method={QUARTILE_METHOD}\n"));
    out.push_str("metric,min_ms,max_ms,mean_ms,std_ms,median_ms,iqr_ms,n,excluded\n");
    out.push_str(&stats_row(labels[0], &stats.m2m));
    out.push_str(&stats_row(labels[1], &stats.g2g));
    out.push_str(&stats_row(labels[2], &stats.e2e));
    if let Some(err) = error_stats {
        out.push_str(&stats_row("e_m2m", &err.m2m));
        out.push_str(&stats_row("e_g2g", &err.g2g));
        out.push_str(&stats_row("e_e2e", &err.e2e));
    }
    out
}

pub fn stats_json(
    stats: &SessionStats,
    labels: &[&str; 3],
    error_stats: Option<&SessionStats>,
) -> serde_json::Result<String> {
    let mut metrics = serde_json::Map::new();
    metrics.insert(labels[0].into(), serde_json::to_value(stats.m2m)?);
    metrics.insert(labels[1].into(), serde_json::to_value(stats.g2g)?);
    metrics.insert(labels[2].into(), serde_json::to_value(stats.e2e)?);
    if let Some(err) = error_stats {
        metrics.insert("e_m2m".into(), serde_json::to_value(err.m2m)?);
        metrics.insert("e_g2g".into(), serde_json::to_value(err.g2g)?);
        metrics.insert("e_e2e".into(), serde_json::to_value(err.e2e)?);
    }
    let doc = serde_json::json!({
        "quartile_method": QUARTILE_METHOD,
        "metrics": metrics,
    });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

/// Error-decomposition statistics for logs that carry ground truth.
pub fn decomposition_stats(log: &EventLog, alignment: &Alignment) -> Option<SessionStats> {
    if !log.has_ground_truth() {
        return None;
    }
    let mut e_m2m = Vec::new();
    let mut e_g2g = Vec::new();
    let mut e_e2e = Vec::new();
    let mut excluded = 0usize;
    for record in &log.records {
        let truth = match log.truth(record.session_id) {
            Some(t) if record.valid => t,
            _ => {
                excluded += 1;
                continue;
            }
        };
        let d = decompose(record, truth, alignment).ok()?;
        e_m2m.push(d.e_m2m_ns);
        e_g2g.push(d.e_g2g_ns);
        e_e2e.push(d.e_e2e_ns);
    }
    if e_m2m.is_empty() {
        return None;
    }
    Some(SessionStats {
        m2m: aggregate(&e_m2m).ok()?.with_excluded(excluded),
        g2g: aggregate(&e_g2g).ok()?.with_excluded(excluded),
        e2e: aggregate(&e_e2e).ok()?.with_excluded(excluded),
    })
}

pub fn exclusions_csv(log: &EventLog) -> String {
    let mut out = String::from("session_id,reason\n");
    for record in &log.records {
        if !record.valid {
            let reason = record.reason.map(|r| r.code()).unwrap_or("unknown");
            out.push_str(&format!("{},{}\n", record.session_id, reason));
        }
    }
    out
}

/// Tidy plot data: one row per session per metric, valid sessions only.
pub fn per_session_csv(log: &EventLog, alignment: &Alignment) -> String {
    let mut out = String::from("session_id,metric,latency_ms\n");
    for record in log.valid_records() {
        if let Ok(triple) = telelat_core::latency::compute_triple(record, alignment) {
            out.push_str(&format!(
                "{},m2m,{}\n{},g2g,{}\n{},e2e,{}\n",
                record.session_id,
                triple.m2m_ns as f64 / 1e6,
                record.session_id,
                triple.g2g_ns as f64 / 1e6,
                record.session_id,
                triple.e2e_ns as f64 / 1e6,
            ));
        }
    }
    out
}

pub fn offset_pairs_csv(pairs: &[(Timestamp, Timestamp)]) -> String {
    let mut out = String::from("event_id,t_station_ns,t_vehicle_ns\n");
    for (i, (s, v)) in pairs.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", i + 1, s.t_ns, v.t_ns));
    }
    out
}

pub fn offset_stats_reports(stats: &OffsetStats) -> serde_json::Result<(String, String)> {
    let csv = format!(
        "min_us,max_us,mean_us,std_us,n\n{},{},{},{},{}\n",
        stats.min_us, stats.max_us, stats.mean_us, stats.std_us, stats.n
    );
    let mut json = serde_json::to_string_pretty(stats)?;
    json.push('\n');
    Ok((csv, json))
}

pub fn breakdown_csv(tables: &[BreakdownTable]) -> String {
    let mut out = String::from("chain,component,mean_ms,provenance\n");
    for table in tables {
        for component in &table.components {
            out.push_str(&format!(
                "{},{},{},{}\n",
                table.chain.as_str(),
                component.name,
                component.mean_ms(),
                component.provenance.as_str()
            ));
        }
    }
    out
}

pub fn breakdown_json(
    tables: &[BreakdownTable],
    notes: &[(Chain, String)],
) -> serde_json::Result<String> {
    let chains: Vec<serde_json::Value> = tables
        .iter()
        .map(|table| {
            serde_json::json!({
                "chain": table.chain.as_str(),
                "total_ms": table.total_ms(),
                "residual": table.residual().name,
                "components": table
                    .components
                    .iter()
                    .map(|c| {
                        serde_json::json!({
                            "name": c.name,
                            "mean_ms": c.mean_ms(),
                            "provenance": c.provenance.as_str(),
                        })
                    })
                    .collect::<Vec<_>>(),
            })
        })
        .collect();
    let footnotes: Vec<serde_json::Value> = notes
        .iter()
        .map(|(chain, note)| serde_json::json!({ "chain": chain.as_str(), "note": note }))
        .collect();
    let mut text = serde_json::to_string_pretty(&serde_json::json!({
        "chains": chains,
        "footnotes": footnotes,
    }))?;
    text.push('\n');
    Ok(text)
}
