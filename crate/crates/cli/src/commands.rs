use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use herald_core::analysis::{analyze, sweep_dtau, AnalysisOptions, FidelityReport, Interval, SweepRow};
use herald_core::photonics::{g2_histogram, visibility_from_histogram, G2Histogram, VisibilityEstimate};
use herald_core::protocol::{run_experiment_with, RunOptions};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::load_config;
use crate::error::CliError;
use crate::eventlog::LogFile;
use crate::manifest::{ManifestParams, RunManifest};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const CORRELATIONS_FILE: &str = "correlations.csv";
pub const G2_FILE: &str = "g2.csv";
pub const VISIBILITY_FILE: &str = "visibility.json";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Parser)]
#[command(name = "herald", version, about = "Simulate and analyze two-node heralded spin-spin entanglement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the experiment and write an event log.
    Run(RunArgs),
    /// Readout-corrected fidelity report from an event log.
    Analyze(AnalyzeArgs),
    /// Two-photon coincidence histogram and interference visibility.
    G2(G2Args),
    /// Events and fidelity as a function of the maximum photon time difference.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML experiment config; built-in calibrated defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Stop after this many entanglement attempts.
    #[arg(long)]
    pub attempts: Option<u64>,
    /// Stop after this much simulated wall-clock time.
    #[arg(long)]
    pub hours: Option<f64>,
    /// Keep click provenance and true state fidelities in the log.
    #[arg(long)]
    pub oracle: bool,
    /// Also log every detector click (needed by `g2`).
    #[arg(long)]
    pub clicks: bool,
}

#[derive(Debug, Args)]
pub struct LogArgs {
    /// Event log written by `run`.
    pub log: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Bootstrap seed; the run's seed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub io: LogArgs,
    /// Replace both signs' |dtau| cut, in ns.
    #[arg(long)]
    pub dtau_max: Option<f64>,
    /// Report the mean true state fidelity (log must be written with --oracle).
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = 2000)]
    pub replicates: usize,
}

#[derive(Debug, Args)]
pub struct G2Args {
    #[command(flatten)]
    pub io: LogArgs,
    /// Histogram bin width in ns.
    #[arg(long, default_value_t = 0.64)]
    pub bins: f64,
    /// Half width of the central window used for the visibility, in ns.
    #[arg(long, default_value_t = 2.56)]
    pub central: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub io: LogArgs,
    /// Comma-separated grid of |dtau| cuts in ns; 3.2 ns steps up to the hardware window by default.
    #[arg(long, value_delimiter = ',')]
    pub dtau_max: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    pub replicates: usize,
}

/// One JSON line for stdout.
pub type Summary = serde_json::Value;

pub fn execute(cli: &Cli) -> Result<Summary, CliError> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::G2(a) => cmd_g2(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}

pub fn cmd_run(args: &RunArgs) -> Result<Summary, CliError> {
    let loaded = load_config(args.config.as_deref())?;
    let mut config = loaded.config;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.attempts.is_some() || args.hours.is_some() {
        config.run.max_attempts = args.attempts;
        config.run.max_hours = args.hours;
    }
    if config.run.max_attempts.is_none() && config.run.max_hours.is_none() {
        return Err(CliError::Config("no run budget: pass --attempts or --hours, or set [run] in the config".into()));
    }
    if let Some(h) = config.run.max_hours {
        if !(h >= 0.0 && h.is_finite()) {
            return Err(CliError::Config(format!("--hours must be a non-negative number, got {h}")));
        }
    }
    config.validate()?;

    let params = ManifestParams {
        attempts: config.run.max_attempts,
        hours: config.run.max_hours,
        oracle: args.oracle,
        clicks: args.clicks,
        ..Default::default()
    };
    RunManifest::new("run", loaded.path, loaded.hash.clone(), config.seed, &args.out, params).write(&args.out)?;

    let log = run_experiment_with(&config, RunOptions { record_clicks: args.clicks })?;
    let file = LogFile::new(log, loaded.hash, args.oracle);
    file.save(&args.out.join(EVENTS_FILE))?;
    let log = &file.log;
    Ok(json!({
        "attempts": log.counters.attempts,
        "cr_cycles": log.counters.cr_cycles,
        "heralds": log.counters.heralds,
        "wall_time_h": log.wall_time_s / 3600.0,
        "heralds_per_hour": log.heralds_per_hour(),
        "events": args.out.join(EVENTS_FILE).display().to_string(),
    }))
}

fn start_analysis(name: &str, io: &LogArgs, params: ManifestParams) -> Result<(LogFile, u64), CliError> {
    let file = LogFile::load(&io.log)?;
    let seed = io.seed.unwrap_or(file.header.config.seed);
    let manifest =
        RunManifest::new(name, io.log.display().to_string(), file.header.config_hash.clone(), seed, &io.out, params);
    manifest.write(&io.out)?;
    Ok((file, seed))
}

pub fn correlations_csv(report: &FidelityReport) -> String {
    let mut out = String::from("sign,basis_a,basis_b,n_uu,n_ud,n_du,n_dd\n");
    for row in &report.table.rows {
        let [a, b, c, d] = row.counts;
        let _ = writeln!(out, "{},{},{},{a},{b},{c},{d}", row.sign, row.basis.0, row.basis.1);
    }
    out
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<Summary, CliError> {
    let params = ManifestParams {
        dtau_max_ns: args.dtau_max.map(|d| vec![d]),
        replicates: Some(args.replicates),
        oracle: args.oracle,
        ..Default::default()
    };
    let (file, seed) = start_analysis("analyze", &args.io, params)?;
    if args.oracle && !file.header.oracle {
        return Err(CliError::Insufficient("log carries no ground truth; rerun with --oracle".into()));
    }
    if let Some(d) = args.dtau_max {
        let hw = file.log.config.windows.dtau_max_ns;
        if !(d >= 0.0) || d > hw {
            return Err(CliError::Config(format!("--dtau-max {d} ns exceeds the detection window ({hw} ns)")));
        }
    }
    let opts = AnalysisOptions {
        dtau_max_ns: args.dtau_max,
        replicates: args.replicates,
        seed,
        oracle: args.oracle,
        ..AnalysisOptions::for_log(&file.log)
    };
    let report = analyze(&file.log, &opts)?;
    write_json(&args.io.out.join(REPORT_FILE), &report)?;
    write_text(&args.io.out.join(CORRELATIONS_FILE), &correlations_csv(&report))?;
    let signs: Vec<_> = report
        .signs
        .iter()
        .map(|s| {
            json!({
                "sign": s.sign.to_string(),
                "n_events": s.n_events,
                "f_best": s.f_best,
                "f_best_ci": [s.f_best_ci.low, s.f_best_ci.high],
                "f_lower": s.f_lower,
                "p_value_above_half": s.p_value_above_half,
                "mean_true_fidelity": s.mean_true_fidelity,
            })
        })
        .collect();
    Ok(json!({ "signs": signs, "insufficient": report.insufficient.iter().map(|s| s.to_string()).collect::<Vec<_>>() }))
}

/// Visibility record written next to the histogram table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Report {
    pub bin_width_ns: f64,
    pub repetition_period_ns: f64,
    pub coincidences: u64,
    pub estimate: VisibilityEstimate,
    /// One standard error either side.
    pub interval: Interval,
}

pub fn histogram_csv(hist: &G2Histogram) -> String {
    let mut out = String::from("bin,dt_ns,coincidences\n");
    for (&bin, &n) in &hist.bins {
        let _ = writeln!(out, "{bin},{},{n}", hist.bin_center_ns(bin));
    }
    out
}

pub fn cmd_g2(args: &G2Args) -> Result<Summary, CliError> {
    if !(args.bins > 0.0) {
        return Err(CliError::Config(format!("--bins must be positive, got {}", args.bins)));
    }
    let params = ManifestParams { bin_width_ns: Some(args.bins), ..Default::default() };
    let (file, _) = start_analysis("g2", &args.io, params)?;
    let clicks = file
        .log
        .clicks
        .as_ref()
        .ok_or_else(|| CliError::Insufficient("log has no click stream; rerun with --clicks".into()))?;
    let period = file.log.config.round_delay_ns;
    let hist = g2_histogram(clicks, args.bins, period);
    write_text(&args.io.out.join(G2_FILE), &histogram_csv(&hist))?;
    let estimate = visibility_from_histogram(&hist, args.central)?;
    let report = G2Report {
        bin_width_ns: args.bins,
        repetition_period_ns: period,
        coincidences: hist.total(),
        interval: Interval {
            low: estimate.visibility - estimate.visibility_se,
            high: estimate.visibility + estimate.visibility_se,
        },
        estimate,
    };
    write_json(&args.io.out.join(VISIBILITY_FILE), &report)?;
    Ok(json!({
        "visibility": estimate.visibility,
        "visibility_se": estimate.visibility_se,
        "central_half_width_ns": args.central,
        "area_ratio": estimate.area_ratio,
        "coincidences": report.coincidences,
    }))
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("dtau_max_ns,sign,n_events,f_best,f_best_low,f_best_high,interference_bound\n");
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for row in rows {
        for c in &row.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                row.dtau_max_ns,
                c.sign,
                c.n_events,
                opt(c.f_best),
                opt(c.f_best_ci.map(|i| i.low)),
                opt(c.f_best_ci.map(|i| i.high)),
                c.interference_bound
            );
        }
    }
    out
}

fn default_grid(window_ns: f64) -> Vec<f64> {
    let steps = (window_ns / 3.2 + 1e-9).floor() as u32;
    (1..=steps).map(|i| f64::from(32 * i) / 10.0).collect()
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Summary, CliError> {
    let params = ManifestParams {
        dtau_max_ns: (!args.dtau_max.is_empty()).then(|| args.dtau_max.clone()),
        replicates: Some(args.replicates),
        ..Default::default()
    };
    let (file, seed) = start_analysis("sweep", &args.io, params)?;
    if file.log.records.is_empty() {
        return Err(CliError::Insufficient("event log has no heralds".into()));
    }
    let grid = if args.dtau_max.is_empty() {
        default_grid(file.log.config.windows.dtau_max_ns)
    } else {
        args.dtau_max.clone()
    };
    let opts = AnalysisOptions { replicates: args.replicates, seed, ..AnalysisOptions::for_log(&file.log) };
    let rows = sweep_dtau(&file.log, &grid, &opts)?;
    write_text(&args.io.out.join(SWEEP_FILE), &sweep_csv(&rows))?;
    Ok(json!({ "rows": rows.len(), "table": args.io.out.join(SWEEP_FILE).display().to_string() }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_reaches_the_window() {
        let g = default_grid(38.4);
        assert_eq!(g.len(), 12);
        assert_eq!(g[0], 3.2);
        assert_eq!(*g.last().unwrap(), 38.4);
        assert_eq!(default_grid(25.6).len(), 8);
    }

    #[test]
    fn cli_parses_every_subcommand() {
        let parse = |args: &[&str]| Cli::try_parse_from(args).map(|c| c.command);
        assert!(matches!(parse(&["herald", "run", "--out", "o", "--attempts", "5"]), Ok(Command::Run(_))));
        assert!(matches!(
            parse(&["herald", "analyze", "l", "--out", "o", "--dtau-max", "12.8"]),
            Ok(Command::Analyze(_))
        ));
        assert!(matches!(parse(&["herald", "g2", "l", "--out", "o", "--bins", "1.28"]), Ok(Command::G2(_))));
        match parse(&["herald", "sweep", "l", "--out", "o", "--dtau-max", "3.2,6.4"]) {
            Ok(Command::Sweep(s)) => assert_eq!(s.dtau_max, vec![3.2, 6.4]),
            other => panic!("{other:?}"),
        }
        assert!(parse(&["herald", "run"]).is_err());
    }
}
