//! `telelat` - command-line front end for the teleoperation latency toolkit.
//!
//! Subcommands: `simulate`, `baseline`, `analyze`, `breakdown`, `validate`,
//! `offset-study`. Exit codes are a stable contract: 0 success, 2 input
//! error, 3 analysis error.

mod manifest;
mod reports;

use std::fmt;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use telelat_core::breakdown::{attribute_residual, BreakdownError, Chain};
use telelat_core::clocks::{estimate_offset, Alignment};
use telelat_core::config::{load_breakdown_inputs, load_pipeline_config};
use telelat_core::events::{ingest_log, validate_session, EventLog, LogFormat, Timestamp};
use telelat_core::latency::{session_stats, LatencyError};
use telelat_core::sim::{self, PipelineConfig, SimOutput};

use manifest::ManifestBuilder;

#[derive(Parser)]
#[command(name = "telelat", version, about = "Teleoperation latency measurement toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the full measurement pipeline and write an event log.
    Simulate(SimArgs),
    /// Simulate the baseline rig (physical latencies forced to zero) and
    /// report the measurement-error distributions.
    Baseline(SimArgs),
    /// Compute per-session latencies and aggregate statistics from a log.
    Analyze(AnalyzeArgs),
    /// Attribute unmeasured residual components from totals and measured
    /// component means.
    Breakdown(BreakdownArgs),
    /// Check every session of a log against the session invariants.
    Validate(ValidateArgs),
    /// Estimate the clock synchronization offset from paired same-event
    /// timestamps.
    OffsetStudy(OffsetStudyArgs),
}

#[derive(clap::Args)]
struct SimArgs {
    /// Pipeline config file (TOML; see presets/).
    #[arg(long)]
    config: PathBuf,
    /// Master seed. Required: simulations are never silently nondeterministic.
    #[arg(long)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the session count from the config.
    #[arg(long)]
    sessions: Option<u32>,
    /// Event-log format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    /// Event log to analyze (CSV or JSON lines).
    log: PathBuf,
    /// Output directory for the stats reports.
    #[arg(long)]
    out: PathBuf,
    /// Report format (both are written unless narrowed).
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Also write a tidy per-session table (one row per session per metric).
    #[arg(long)]
    per_session: bool,
}

#[derive(clap::Args)]
struct BreakdownArgs {
    /// Breakdown inputs document (TOML with totals and measured means).
    #[arg(long)]
    inputs: PathBuf,
    /// Output directory for the report.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(clap::Args)]
struct ValidateArgs {
    /// Event log to validate.
    log: PathBuf,
}

#[derive(clap::Args)]
struct OffsetStudyArgs {
    /// Paired-event file: `event_id,t_station_ns,t_vehicle_ns` CSV.
    pairs: PathBuf,
    /// Optional output directory for the offset report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Error with a contractual exit code.
enum CliError {
    /// Unreadable/unparseable inputs, bad configs: exit 2.
    Input(String),
    /// The analysis itself cannot proceed (no valid sessions, negative
    /// residual): exit 3.
    Analysis(String),
    /// Everything else (e.g. output IO): exit 1.
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Analysis(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(msg) | CliError::Analysis(msg) | CliError::Other(msg) => {
                f.write_str(msg)
            }
        }
    }
}

fn input_err(e: impl fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn other_err(e: impl fmt::Display) -> CliError {
    CliError::Other(e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("TELELAT_LOG")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args, false),
        Command::Baseline(args) => cmd_simulate(args, true),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Breakdown(args) => cmd_breakdown(args),
        Command::Validate(args) => cmd_validate(args),
        Command::OffsetStudy(args) => cmd_offset_study(args),
    }
}

fn load_config(args: &SimArgs) -> Result<PipelineConfig, CliError> {
    let mut config = load_pipeline_config(&args.config)
        .map_err(|e| input_err(format!("{}: {e}", args.config.display())))?;
    config.seed = args.seed;
    if let Some(sessions) = args.sessions {
        config.sessions = sessions;
    }
    config.validate().map_err(input_err)?;
    Ok(config)
}

fn cmd_simulate(args: SimArgs, baseline: bool) -> Result<(), CliError> {
    let config = load_config(&args)?;
    let output = if baseline {
        sim::run_baseline(&config)
    } else {
        sim::simulate(&config)
    }
    .map_err(input_err)?;

    fs::create_dir_all(&args.out).map_err(other_err)?;
    let command = if baseline { "baseline" } else { "simulate" };
    let mut manifest = ManifestBuilder::new(command, Some(args.seed));
    manifest.record_input(&args.config).map_err(other_err)?;

    let log_format = match args.format {
        Format::Csv => LogFormat::Csv,
        Format::Json => LogFormat::JsonLines,
    };
    let log_name = match args.format {
        Format::Csv => "events.csv",
        Format::Json => "events.jsonl",
    };
    let mut log_bytes = Vec::new();
    telelat_core::events::write_log(&output.log, log_format, &mut log_bytes)
        .map_err(other_err)?;
    manifest
        .write_output(&args.out, log_name, &log_bytes)
        .map_err(other_err)?;

    let ledger_bytes = reports::ledger_jsonl(&output.ledgers).map_err(other_err)?;
    manifest
        .write_output(&args.out, "ledger.jsonl", &ledger_bytes)
        .map_err(other_err)?;

    let alignment = Alignment::AssumeSynchronized;
    if baseline {
        let stats = session_stats(&output.log.records, &alignment).map_err(analysis_err)?;
        let labels = ["e_m2m", "e_g2g", "e_e2e"];
        write_stats_reports(&mut manifest, &args.out, None, &stats, &labels, None)?;
        write_offset_outputs(&mut manifest, &args.out, &output)?;
        println!(
            "baseline: {} sessions ({} excluded), E_M2M mean {:.3} ms, E_G2G mean {:.3} ms, E_E2E mean {:.3} ms",
            output.log.records.len(),
            stats.m2m.excluded,
            stats.m2m.mean_ms,
            stats.g2g.mean_ms,
            stats.e2e.mean_ms,
        );
    } else {
        println!("simulated {} sessions -> {}", output.log.records.len(), args.out.display());
    }

    manifest.finish(&args.out).map_err(other_err)?;
    info!("{command} wrote {}", args.out.display());
    Ok(())
}

fn analysis_err(e: LatencyError) -> CliError {
    CliError::Analysis(e.to_string())
}

fn detect_log_format(path: &Path) -> LogFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("json") => LogFormat::JsonLines,
        _ => LogFormat::Csv,
    }
}

fn read_log(path: &Path) -> Result<EventLog, CliError> {
    let file = fs::File::open(path).map_err(|e| input_err(format!("{}: {e}", path.display())))?;
    ingest_log(BufReader::new(file), detect_log_format(path))
        .map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let log = read_log(&args.log)?;
    let alignment = Alignment::AssumeSynchronized;
    let stats = match session_stats(&log.records, &alignment) {
        Ok(stats) => stats,
        Err(LatencyError::NoValidSessions) => {
            return Err(CliError::Analysis(format!(
                "no valid sessions in {} ({} excluded)",
                args.log.display(),
                log.excluded_count()
            )));
        }
        Err(e) => return Err(analysis_err(e)),
    };

    fs::create_dir_all(&args.out).map_err(other_err)?;
    let mut manifest = ManifestBuilder::new("analyze", None);
    manifest.record_input(&args.log).map_err(other_err)?;

    // Simulated logs with ground truth also get the error decomposition.
    let error_stats = reports::decomposition_stats(&log, &alignment);
    write_stats_reports(
        &mut manifest,
        &args.out,
        args.format,
        &stats,
        &["m2m", "g2g", "e2e"],
        error_stats.as_ref(),
    )?;

    let exclusions = reports::exclusions_csv(&log);
    manifest
        .write_output(&args.out, "exclusions.csv", exclusions.as_bytes())
        .map_err(other_err)?;

    if args.per_session {
        let table = reports::per_session_csv(&log, &alignment);
        manifest
            .write_output(&args.out, "sessions.csv", table.as_bytes())
            .map_err(other_err)?;
    }

    manifest.finish(&args.out).map_err(other_err)?;
    println!(
        "analyzed {}: n={} excluded={} | M2M median {:.1} ms | G2G median {:.1} ms | E2E median {:.1} ms",
        args.log.display(),
        stats.m2m.n,
        stats.m2m.excluded,
        stats.m2m.median_ms,
        stats.g2g.median_ms,
        stats.e2e.median_ms,
    );
    Ok(())
}

fn write_stats_reports(
    manifest: &mut ManifestBuilder,
    out: &Path,
    format: Option<Format>,
    stats: &telelat_core::latency::SessionStats,
    labels: &[&str; 3],
    error_stats: Option<&telelat_core::latency::SessionStats>,
) -> Result<(), CliError> {
    let want_csv = format.is_none_or(|f| f == Format::Csv);
    let want_json = format.is_none_or(|f| f == Format::Json);
    if want_csv {
        let csv = reports::stats_csv(stats, labels, error_stats);
        manifest
            .write_output(out, "stats.csv", csv.as_bytes())
            .map_err(other_err)?;
    }
    if want_json {
        let json = reports::stats_json(stats, labels, error_stats).map_err(other_err)?;
        manifest
            .write_output(out, "stats.json", json.as_bytes())
            .map_err(other_err)?;
    }
    Ok(())
}

fn write_offset_outputs(
    manifest: &mut ManifestBuilder,
    out: &Path,
    output: &SimOutput,
) -> Result<(), CliError> {
    if output.offset_pairs.is_empty() {
        return Ok(());
    }
    let pairs_csv = reports::offset_pairs_csv(&output.offset_pairs);
    manifest
        .write_output(out, "offset_pairs.csv", pairs_csv.as_bytes())
        .map_err(other_err)?;
    let stats = estimate_offset(&output.offset_pairs).map_err(|e| CliError::Analysis(e.to_string()))?;
    let report = reports::offset_stats_reports(&stats).map_err(other_err)?;
    manifest
        .write_output(out, "offset_study.csv", report.0.as_bytes())
        .map_err(other_err)?;
    manifest
        .write_output(out, "offset_study.json", report.1.as_bytes())
        .map_err(other_err)?;
    Ok(())
}

fn cmd_breakdown(args: BreakdownArgs) -> Result<(), CliError> {
    let inputs = load_breakdown_inputs(&args.inputs)
        .map_err(|e| input_err(format!("{}: {e}", args.inputs.display())))?;
    if inputs.m2m.is_none() && inputs.g2g.is_none() {
        return Err(input_err("breakdown inputs declare neither [m2m] nor [g2g]"));
    }

    let mut tables = Vec::new();
    let mut notes = Vec::new();
    for (chain, chain_inputs) in [(Chain::M2M, &inputs.m2m), (Chain::G2G, &inputs.g2g)] {
        if let Some(ci) = chain_inputs {
            let table = attribute_residual(chain, ci.total_ms, &ci.measured, &ci.residual)
                .map_err(|e| match e {
                    BreakdownError::NegativeResidual { deficit_ms } => CliError::Analysis(format!(
                        "{} components exceed the total by {deficit_ms:.3} ms",
                        chain.as_str()
                    )),
                    other => input_err(other),
                })?;
            if let Some(note) = &ci.note {
                notes.push((chain, note.clone()));
            }
            tables.push(table);
        }
    }

    fs::create_dir_all(&args.out).map_err(other_err)?;
    let mut manifest = ManifestBuilder::new("breakdown", None);
    manifest.record_input(&args.inputs).map_err(other_err)?;

    let want_csv = args.format.is_none_or(|f| f == Format::Csv);
    let want_json = args.format.is_none_or(|f| f == Format::Json);
    if want_csv {
        let csv = reports::breakdown_csv(&tables);
        manifest
            .write_output(&args.out, "breakdown.csv", csv.as_bytes())
            .map_err(other_err)?;
    }
    if want_json {
        let json = reports::breakdown_json(&tables, &notes).map_err(other_err)?;
        manifest
            .write_output(&args.out, "breakdown.json", json.as_bytes())
            .map_err(other_err)?;
    }
    manifest.finish(&args.out).map_err(other_err)?;

    for table in &tables {
        let residual = table.residual();
        println!(
            "{}: total {:.2} ms, {} (residual) {:.2} ms",
            table.chain.as_str(),
            table.total_ms(),
            residual.name,
            residual.mean_ms()
        );
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let log = read_log(&args.log)?;
    let mut invalid = 0usize;
    for record in &log.records {
        let report = validate_session(record, false);
        if report.valid {
            println!("session {}: ok", record.session_id);
        } else {
            invalid += 1;
            let codes: Vec<&str> = report.violations.iter().map(|v| v.code()).collect();
            println!("session {}: INVALID ({})", record.session_id, codes.join(", "));
        }
    }
    println!(
        "{} sessions, {} valid, {} invalid",
        log.records.len(),
        log.records.len() - invalid,
        invalid
    );
    Ok(())
}

fn cmd_offset_study(args: OffsetStudyArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.pairs)
        .map_err(|e| input_err(format!("{}: {e}", args.pairs.display())))?;
    let pairs = parse_offset_pairs(&text).map_err(input_err)?;
    let stats = estimate_offset(&pairs).map_err(|e| CliError::Analysis(e.to_string()))?;

    if let Some(out) = &args.out {
        fs::create_dir_all(out).map_err(other_err)?;
        let mut manifest = ManifestBuilder::new("offset-study", None);
        manifest.record_input(&args.pairs).map_err(other_err)?;
        let (csv, json) = reports::offset_stats_reports(&stats).map_err(other_err)?;
        manifest
            .write_output(out, "offset_study.csv", csv.as_bytes())
            .map_err(other_err)?;
        manifest
            .write_output(out, "offset_study.json", json.as_bytes())
            .map_err(other_err)?;
        manifest.finish(out).map_err(other_err)?;
    }

    println!(
        "offset over {} pairs: mean {:.3} us, std {:.3} us, min {:.3} us, max {:.3} us",
        stats.n, stats.mean_us, stats.std_us, stats.min_us, stats.max_us
    );
    Ok(())
}

fn parse_offset_pairs(text: &str) -> Result<Vec<(Timestamp, Timestamp)>, String> {
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty()
            || trimmed.starts_with('#')
            || trimmed == "event_id,t_station_ns,t_vehicle_ns"
        {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 3 {
            return Err(format!("line {line_no}: expected 3 fields, got {}", fields.len()));
        }
        let t_station: i64 = fields[1]
            .trim()
            .parse()
            .map_err(|e| format!("line {line_no}: bad t_station_ns: {e}"))?;
        let t_vehicle: i64 = fields[2]
            .trim()
            .parse()
            .map_err(|e| format!("line {line_no}: bad t_vehicle_ns: {e}"))?;
        pairs.push((Timestamp::station(t_station), Timestamp::vehicle(t_vehicle)));
    }
    Ok(pairs)
}
