//! Python bindings for the teleoperation latency toolkit.
//!
//! Exposes the analysis operations (latency statistics, residual
//! attribution, derived quantities, offset estimation), the motion onset
//! detector and the pipeline simulator as plain functions returning dicts
//! and tuples, so results drop straight into pandas/matplotlib workflows.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use telelat_core::breakdown;
use telelat_core::clocks::{estimate_offset as core_estimate_offset, Alignment};
use telelat_core::config;
use telelat_core::events::{ingest_log, ClockDomain, LogFormat, SessionRecord, Timestamp};
use telelat_core::latency::{self, LatencyStats};
use telelat_core::motion::{self, DetectorConfig, FusionMode, GyroSample};
use telelat_core::sim::{self, FieldPreset};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn stats_dict<'py>(py: Python<'py>, s: &LatencyStats) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("min_ms", s.min_ms)?;
    d.set_item("max_ms", s.max_ms)?;
    d.set_item("mean_ms", s.mean_ms)?;
    d.set_item("std_ms", s.std_ms)?;
    d.set_item("median_ms", s.median_ms)?;
    d.set_item("iqr_ms", s.iqr_ms)?;
    d.set_item("n", s.n)?;
    d.set_item("excluded", s.excluded)?;
    Ok(d)
}

/// First-order exponential low-pass filter; `alpha` in (0, 1].
#[pyfunction]
fn lowpass(xs: Vec<f64>, alpha: f64) -> PyResult<Vec<f64>> {
    motion::lowpass(&xs, alpha).map_err(value_err)
}

/// Detect motion events in a tri-axial angular-velocity stream.
///
/// Returns a list of dicts with `onset_ns`, `completion_ns` (None while
/// motion is still ongoing at stream end) and `peak_velocity`.
#[pyfunction]
#[pyo3(signature = (t_ns, wx, wy, wz, alpha = 0.1, threshold = 0.05, completion_window_s = 2.5))]
#[allow(clippy::too_many_arguments)]
fn detect(
    py: Python<'_>,
    t_ns: Vec<i64>,
    wx: Vec<f64>,
    wy: Vec<f64>,
    wz: Vec<f64>,
    alpha: f64,
    threshold: f64,
    completion_window_s: f64,
) -> PyResult<Py<PyList>> {
    if t_ns.len() != wx.len() || t_ns.len() != wy.len() || t_ns.len() != wz.len() {
        return Err(PyValueError::new_err("t_ns, wx, wy, wz must have equal length"));
    }
    let stream: Vec<GyroSample> = t_ns
        .iter()
        .zip(wx.iter().zip(wy.iter().zip(wz.iter())))
        .map(|(&t, (&x, (&y, &z)))| GyroSample::new(Timestamp::reference(t), x, y, z))
        .collect();
    let config = DetectorConfig {
        alpha,
        threshold,
        completion_window_s,
        fusion: FusionMode::L2Norm,
    };
    let events = motion::detect(&stream, &config).map_err(value_err)?;
    let out = PyList::empty(py);
    for event in events {
        let d = PyDict::new(py);
        d.set_item("onset_ns", event.onset.t_ns)?;
        d.set_item("completion_ns", event.completion.map(|c| c.t_ns))?;
        d.set_item("peak_velocity", event.peak_velocity)?;
        out.append(d)?;
    }
    Ok(out.unbind())
}

/// Aggregate nanosecond durations into millisecond statistics
/// (min/max/mean/std/median/IQR, type-7 quartiles).
#[pyfunction]
fn aggregate(py: Python<'_>, values_ns: Vec<i64>) -> PyResult<Py<PyDict>> {
    let stats = latency::aggregate(&values_ns).map_err(value_err)?;
    Ok(stats_dict(py, &stats)?.unbind())
}

/// Latency triple of one session, nanoseconds: `(m2m, g2g, e2e)`.
#[pyfunction]
fn compute_triple(
    gy_station_ns: i64,
    gy_vehicle_ns: i64,
    led_on_ns: i64,
    pt_trigger_ns: i64,
) -> PyResult<(i64, i64, i64)> {
    let record = SessionRecord::complete(
        0,
        Timestamp::new(gy_station_ns, ClockDomain::Station),
        Timestamp::new(gy_vehicle_ns, ClockDomain::Vehicle),
        Timestamp::new(led_on_ns, ClockDomain::Vehicle),
        Timestamp::new(pt_trigger_ns, ClockDomain::Station),
    );
    let triple =
        latency::compute_triple(&record, &Alignment::AssumeSynchronized).map_err(value_err)?;
    Ok((triple.m2m_ns, triple.g2g_ns, triple.e2e_ns))
}

/// Close a chain total against measured component means; the residual takes
/// the remainder. Returns `(name, mean_ms, provenance)` rows.
#[pyfunction]
fn attribute_residual(
    chain: &str,
    total_ms: f64,
    measured: Vec<(String, f64)>,
    residual: &str,
) -> PyResult<Vec<(String, f64, String)>> {
    let chain = match chain.to_ascii_lowercase().as_str() {
        "m2m" => breakdown::Chain::M2M,
        "g2g" => breakdown::Chain::G2G,
        other => return Err(PyValueError::new_err(format!("unknown chain {other:?}"))),
    };
    let components: Vec<breakdown::MeasuredComponent> = measured
        .into_iter()
        .map(|(name, mean_ms)| breakdown::MeasuredComponent::new(name, mean_ms))
        .collect();
    let table =
        breakdown::attribute_residual(chain, total_ms, &components, residual).map_err(value_err)?;
    Ok(table
        .components
        .iter()
        .map(|c| (c.name.clone(), c.mean_ms(), c.provenance.as_str().to_string()))
        .collect())
}

/// Serialization delay of a payload over a link, milliseconds.
#[pyfunction]
fn network_latency_from_throughput(payload_kb: f64, throughput_kbps: f64) -> PyResult<f64> {
    breakdown::network_latency_from_throughput(payload_kb, throughput_kbps).map_err(value_err)
}

/// Expected wait until the next refresh of a periodic display, milliseconds.
#[pyfunction]
fn refresh_expectation(rate_hz: f64) -> PyResult<f64> {
    breakdown::refresh_expectation(rate_hz).map_err(value_err)
}

/// Fractions of end-to-end latency contributed by the M2M and G2G chains.
#[pyfunction]
fn e2e_share(m2m_mean: f64, g2g_mean: f64) -> PyResult<(f64, f64)> {
    breakdown::e2e_share(m2m_mean, g2g_mean).map_err(value_err)
}

/// Offset statistics over `(t_station_ns, t_vehicle_ns)` pairs taken for the
/// same physical events, microseconds.
#[pyfunction]
fn estimate_offset(py: Python<'_>, pairs: Vec<(i64, i64)>) -> PyResult<Py<PyDict>> {
    let pairs: Vec<(Timestamp, Timestamp)> = pairs
        .into_iter()
        .map(|(s, v)| (Timestamp::station(s), Timestamp::vehicle(v)))
        .collect();
    let stats = core_estimate_offset(&pairs).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("min_us", stats.min_us)?;
    d.set_item("max_us", stats.max_us)?;
    d.set_item("mean_us", stats.mean_us)?;
    d.set_item("std_us", stats.std_us)?;
    d.set_item("n", stats.n)?;
    Ok(d.unbind())
}

/// TOML text of a built-in preset: "4g", "5g-nsa" or "baseline".
#[pyfunction]
fn preset_config(name: &str) -> PyResult<String> {
    let config = match name {
        "4g" => sim::emulate_field(FieldPreset::FourG),
        "5g-nsa" => sim::emulate_field(FieldPreset::FiveGNsa),
        "baseline" => sim::baseline_config(),
        other => return Err(PyValueError::new_err(format!("unknown preset {other:?}"))),
    };
    Ok(config::pipeline_config_to_toml(&config))
}

fn run_sim(
    py: Python<'_>,
    config_path: &str,
    seed: u64,
    sessions: Option<u32>,
    baseline: bool,
) -> PyResult<Py<PyDict>> {
    let mut config = config::load_pipeline_config(config_path).map_err(value_err)?;
    config.seed = seed;
    if let Some(n) = sessions {
        config.sessions = n;
    }
    let output = if baseline {
        sim::run_baseline(&config)
    } else {
        sim::simulate(&config)
    }
    .map_err(runtime_err)?;

    let alignment = Alignment::AssumeSynchronized;
    let stats = latency::session_stats(&output.log.records, &alignment).map_err(runtime_err)?;

    let result = PyDict::new(py);
    result.set_item("sessions", output.log.records.len())?;
    result.set_item("excluded", stats.m2m.excluded)?;
    result.set_item("m2m", stats_dict(py, &stats.m2m)?)?;
    result.set_item("g2g", stats_dict(py, &stats.g2g)?)?;
    result.set_item("e2e", stats_dict(py, &stats.e2e)?)?;

    let triples = PyList::empty(py);
    for record in output.log.valid_records() {
        let triple = latency::compute_triple(record, &alignment).map_err(runtime_err)?;
        triples.append((record.session_id, triple.m2m_ns, triple.g2g_ns, triple.e2e_ns))?;
    }
    result.set_item("triples", triples)?;

    if baseline {
        let offsets = core_estimate_offset(&output.offset_pairs).map_err(runtime_err)?;
        let d = PyDict::new(py);
        d.set_item("min_us", offsets.min_us)?;
        d.set_item("max_us", offsets.max_us)?;
        d.set_item("mean_us", offsets.mean_us)?;
        d.set_item("std_us", offsets.std_us)?;
        d.set_item("n", offsets.n)?;
        result.set_item("offset", d)?;
    }
    Ok(result.unbind())
}

/// Run the pipeline simulator on a config file. Returns aggregate statistics
/// plus per-session `(session_id, m2m_ns, g2g_ns, e2e_ns)` triples.
#[pyfunction]
#[pyo3(signature = (config_path, seed, sessions = None))]
fn simulate(
    py: Python<'_>,
    config_path: &str,
    seed: u64,
    sessions: Option<u32>,
) -> PyResult<Py<PyDict>> {
    run_sim(py, config_path, seed, sessions, false)
}

/// Run the baseline rig (physical latencies zero); statistics are the
/// measurement-error distributions, plus the clock offset study.
#[pyfunction]
#[pyo3(signature = (config_path, seed, sessions = None))]
fn baseline(
    py: Python<'_>,
    config_path: &str,
    seed: u64,
    sessions: Option<u32>,
) -> PyResult<Py<PyDict>> {
    run_sim(py, config_path, seed, sessions, true)
}

/// Ingest an event log (CSV or JSON lines by extension) and compute
/// per-metric statistics.
#[pyfunction]
fn analyze_log(py: Python<'_>, path: &str) -> PyResult<Py<PyDict>> {
    let format = if path.ends_with(".jsonl") || path.ends_with(".json") {
        LogFormat::JsonLines
    } else {
        LogFormat::Csv
    };
    let file = std::fs::File::open(path).map_err(value_err)?;
    let log = ingest_log(std::io::BufReader::new(file), format).map_err(value_err)?;
    let stats =
        latency::session_stats(&log.records, &Alignment::AssumeSynchronized).map_err(value_err)?;
    let result = PyDict::new(py);
    result.set_item("sessions", log.records.len())?;
    result.set_item("excluded", stats.m2m.excluded)?;
    result.set_item("m2m", stats_dict(py, &stats.m2m)?)?;
    result.set_item("g2g", stats_dict(py, &stats.g2g)?)?;
    result.set_item("e2e", stats_dict(py, &stats.e2e)?)?;
    result.set_item("simulated", log.simulated)?;
    Ok(result.unbind())
}

#[pymodule]
fn telelat(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(lowpass, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(compute_triple, m)?)?;
    m.add_function(wrap_pyfunction!(attribute_residual, m)?)?;
    m.add_function(wrap_pyfunction!(network_latency_from_throughput, m)?)?;
    m.add_function(wrap_pyfunction!(refresh_expectation, m)?)?;
    m.add_function(wrap_pyfunction!(e2e_share, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_offset, m)?)?;
    m.add_function(wrap_pyfunction!(preset_config, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(baseline, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_log, m)?)?;
    Ok(())
}
