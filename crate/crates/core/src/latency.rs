//! Per-session latency computation, measured-vs-physical decomposition and
//! aggregate statistics.
//!
//! All per-session arithmetic is integer nanoseconds so the defining identity
//! `e2e = m2m + g2g` holds exactly, with no rounding asymmetry between the
//! direct end-to-end form and the sum of its parts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clocks::{Alignment, ClockError};
use crate::events::{EventError, GroundTruth, InvalidReason, SessionRecord};

/// One session's measured latencies, nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyTriple {
    pub m2m_ns: i64,
    pub g2g_ns: i64,
    pub e2e_ns: i64,
}

/// Measured-vs-physical split of one session, nanoseconds.
///
/// `measured = physical + error` holds exactly for each metric, and the
/// error terms compose: `e_e2e = e_m2m + e_g2g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    pub m2m_phy_ns: i64,
    pub g2g_phy_ns: i64,
    pub e2e_phy_ns: i64,
    pub e_m2m_ns: i64,
    pub e_g2g_ns: i64,
    pub e_e2e_ns: i64,
}

/// Aggregate latency statistics, milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub min_ms: f64,
    pub max_ms: f64,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub median_ms: f64,
    pub iqr_ms: f64,
    pub n: usize,
    /// Sessions excluded from the statistics (invalid, with reason codes).
    pub excluded: usize,
}

impl LatencyStats {
    pub fn with_excluded(mut self, excluded: usize) -> Self {
        self.excluded = excluded;
        self
    }
}

/// Statistics for all three metrics over one set of sessions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub m2m: LatencyStats,
    pub g2g: LatencyStats,
    pub e2e: LatencyStats,
}

#[derive(Debug, Error)]
pub enum LatencyError {
    #[error("session {session_id} skipped: {reason:?}")]
    SkippedSession {
        session_id: u64,
        reason: Option<InvalidReason>,
    },
    #[error("ground truth required for decomposition")]
    MissingGroundTruth,
    #[error("no values to aggregate")]
    EmptyInput,
    #[error("no valid sessions")]
    NoValidSessions,
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Event(#[from] EventError),
}

/// Compute the measured latency triple of a valid session.
///
/// `m2m = gy_vehicle - gy_station`, `g2g = pt_trigger - led_on`, and
/// `e2e = pt_trigger - gy_station - (led_on - gy_vehicle)`; the last is also
/// checked against `m2m + g2g`, which it equals identically in integer
/// arithmetic. Cross-domain subtraction happens on the common timescale
/// produced by `alignment`.
pub fn compute_triple(
    record: &SessionRecord,
    alignment: &Alignment,
) -> Result<LatencyTriple, LatencyError> {
    if !record.valid {
        return Err(LatencyError::SkippedSession {
            session_id: record.session_id,
            reason: record.reason,
        });
    }
    let anchors = record.anchors().ok_or(LatencyError::SkippedSession {
        session_id: record.session_id,
        reason: record.reason,
    })?;

    let gy_station = alignment.to_reference(anchors.gy_station)?.t_ns;
    let gy_vehicle = alignment.to_reference(anchors.gy_vehicle)?.t_ns;
    let led_on = alignment.to_reference(anchors.led_on)?.t_ns;
    let pt_trigger = alignment.to_reference(anchors.pt_trigger)?.t_ns;

    let m2m_ns = gy_vehicle - gy_station;
    let g2g_ns = pt_trigger - led_on;
    let led_delay = led_on - gy_vehicle;
    let e2e_ns = pt_trigger - gy_station - led_delay;
    debug_assert_eq!(e2e_ns, m2m_ns + g2g_ns);

    Ok(LatencyTriple {
        m2m_ns,
        g2g_ns,
        e2e_ns,
    })
}

/// Split a session's measured triple into physical latency plus
/// measurement-system error using simulation ground truth.
pub fn decompose(
    record: &SessionRecord,
    truth: &GroundTruth,
    alignment: &Alignment,
) -> Result<ErrorDecomposition, LatencyError> {
    let measured = compute_triple(record, alignment)?;

    let m2m_phy_ns = truth.m_vehicle.t_ns - truth.m_station.t_ns;
    let g2g_phy_ns = truth.pt_phy.t_ns - truth.led_phy.t_ns;
    let e2e_phy_ns = m2m_phy_ns + g2g_phy_ns;

    Ok(ErrorDecomposition {
        m2m_phy_ns,
        g2g_phy_ns,
        e2e_phy_ns,
        e_m2m_ns: measured.m2m_ns - m2m_phy_ns,
        e_g2g_ns: measured.g2g_ns - g2g_phy_ns,
        e_e2e_ns: measured.e2e_ns - e2e_phy_ns,
    })
}

/// Aggregate nanosecond durations into millisecond statistics.
///
/// Quartiles (median, IQR) use linear interpolation between closest ranks;
/// the standard deviation is the sample standard deviation (zero for a
/// single value).
pub fn aggregate(values_ns: &[i64]) -> Result<LatencyStats, LatencyError> {
    if values_ns.is_empty() {
        return Err(LatencyError::EmptyInput);
    }
    let mut sorted_ms: Vec<f64> = values_ns.iter().map(|&v| v as f64 / 1e6).collect();
    sorted_ms.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let n = sorted_ms.len();
    let mean = sorted_ms.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        let var = sorted_ms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        var.sqrt()
    } else {
        0.0
    };

    Ok(LatencyStats {
        min_ms: sorted_ms[0],
        max_ms: sorted_ms[n - 1],
        mean_ms: mean,
        std_ms: std,
        median_ms: quantile(&sorted_ms, 0.5),
        iqr_ms: quantile(&sorted_ms, 0.75) - quantile(&sorted_ms, 0.25),
        n,
        excluded: 0,
    })
}

/// Linear interpolation between closest ranks on a sorted slice.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&p));
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Per-metric statistics over the valid sessions of a record set; invalid
/// sessions are counted in `excluded`.
pub fn session_stats(
    records: &[SessionRecord],
    alignment: &Alignment,
) -> Result<SessionStats, LatencyError> {
    let mut m2m = Vec::new();
    let mut g2g = Vec::new();
    let mut e2e = Vec::new();
    let mut excluded = 0usize;

    for record in records {
        if !record.valid {
            excluded += 1;
            continue;
        }
        let triple = compute_triple(record, alignment)?;
        m2m.push(triple.m2m_ns);
        g2g.push(triple.g2g_ns);
        e2e.push(triple.e2e_ns);
    }
    if m2m.is_empty() {
        return Err(LatencyError::NoValidSessions);
    }
    Ok(SessionStats {
        m2m: aggregate(&m2m)?.with_excluded(excluded),
        g2g: aggregate(&g2g)?.with_excluded(excluded),
        e2e: aggregate(&e2e)?.with_excluded(excluded),
    })
}

/// Statistics of baseline-mode sessions, where physical latencies are forced
/// to (near) zero so the measured triples are the measurement-system error
/// distributions E_M2M / E_G2G / E_E2E.
pub fn baseline_errors(
    records: &[SessionRecord],
    alignment: &Alignment,
) -> Result<SessionStats, LatencyError> {
    session_stats(records, alignment)
}
