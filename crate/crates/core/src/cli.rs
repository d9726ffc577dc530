//! The `univlab` command line: identity suites, universality benchmarks and ensemble
//! statistics, each writing `report.json`, `summary.csv` and a run manifest.
//!
//! Exit codes: 0 success, 1 failed check or bound or a runtime error, 2 usage or
//! configuration error.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bench::{
    default_experiments, run_experiment, run_sweep, BenchMode, BoundReport, EnsembleConfig, ExperimentConfig,
    Observable, SweepReport,
};
use crate::ensembles::{Ensemble, EnsembleFamily, EvalMode};
use crate::error::Error;
use crate::identities::{default_suite, run_suite, IdentityCheckResult};
use crate::report::{content_hash, write_csv, write_json};
use crate::rng::RngStream;
use crate::spectral_stats::{empirical_msd, ensemble_statistics, SpectralHistogram, StatisticsReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const STREAM_MSD: u64 = 0x6d73_64;

#[derive(Debug, Parser)]
#[command(name = "univlab", version, about = "Identity checks and universality benchmarks for independent random matrix sums")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the identity and inequality suite.
    VerifyIdentities(CommonArgs),
    /// Compare an ensemble with its Gaussian proxy against the universality bounds.
    Bench(CommonArgs),
    /// Compute the statistics of an ensemble and its empirical spectral distribution.
    Stats(CommonArgs),
}

#[derive(Clone, Debug, Args)]
pub struct CommonArgs {
    /// JSON configuration; defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "univlab-out")]
    pub out: PathBuf,
    /// Seed override.
    #[arg(long, env = "UNIVLAB_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; all available cores by default.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Keep only checks or experiments whose name contains this string.
    #[arg(long)]
    pub filter: Option<String>,
    /// Keep only experiments of this observable.
    #[arg(long)]
    pub observable: Option<String>,
    /// Sweep a parameter, e.g. `n=25,50,100`.
    #[arg(long)]
    pub sweep: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Mc,
}

/// Provenance of one run. Timestamp and runtime live here, never in the payloads.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub output_dir: String,
    pub seed_override: Option<u64>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    /// Content hash of the effective configuration; independent of key order.
    pub config_hash: String,
    pub runtime_seconds: f64,
    pub version: String,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Failure(_) => EXIT_FAILURE,
        }
    }
}

/// Configuration errors are usage errors; everything else is a run failure.
fn classify(e: Error) -> CliError {
    match e {
        Error::Config(_)
        | Error::Json(_)
        | Error::InvalidP { .. }
        | Error::InvalidInput(_)
        | Error::InvalidEnsemble(_)
        | Error::InvalidT(_) => CliError::Usage(e.to_string()),
        other => CliError::Failure(other.to_string()),
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::VerifyIdentities(a) => cmd_verify_identities(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Stats(a) => cmd_stats(&a),
    }
}

fn finish(result: CliResult<bool>) -> i32 {
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAILURE,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}"),
                CliError::Failure(m) => eprintln!("failure: {m}"),
            }
            e.code()
        }
    }
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("malformed config {}: {e}", path.display())))
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Failure(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Failure(format!("cannot create {}: {e}", dir.display())))
}

fn io_failure(e: Error) -> CliError {
    CliError::Failure(e.to_string())
}

fn write_manifest<C: Serialize>(command: &str, args: &CommonArgs, effective: &C, started: Instant) -> CliResult<()> {
    let manifest = RunManifest {
        command: command.into(),
        config_path: args.config.as_ref().map(|p| p.display().to_string()),
        output_dir: args.out.display().to_string(),
        seed_override: args.seed,
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        config_hash: content_hash(effective),
        runtime_seconds: started.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").into(),
    };
    write_json(&args.out.join("manifest.json"), &manifest).map_err(io_failure)
}

fn reject(command: &str, flags: &[(&str, bool)]) -> CliResult<()> {
    match flags.iter().find(|(_, present)| *present) {
        Some((flag, _)) => Err(CliError::Usage(format!("{flag} is not accepted by {command}"))),
        None => Ok(()),
    }
}

/// Settings of `verify-identities`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitiesConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentitiesOutput {
    pub total: usize,
    pub passed: usize,
    pub failed: Vec<String>,
    pub results: Vec<IdentityCheckResult>,
}

/// Runs the default identity suite; exit 0 iff every selected check passes.
pub fn cmd_verify_identities(args: &CommonArgs) -> i32 {
    finish(verify_identities(args))
}

fn verify_identities(args: &CommonArgs) -> CliResult<bool> {
    let started = Instant::now();
    reject(
        "verify-identities",
        &[("--observable", args.observable.is_some()), ("--sweep", args.sweep.is_some()), ("--mode", args.mode.is_some())],
    )?;
    let mut cfg: IdentitiesConfig = match &args.config {
        Some(p) => read_config(p)?,
        None => IdentitiesConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.filter.is_some() {
        cfg.filter = args.filter.clone();
    }
    prepare_out(&args.out)?;
    let suite = default_suite(cfg.seed);
    let results = with_threads(args.threads, || run_suite(&suite, cfg.filter.as_deref()))?;
    if results.is_empty() {
        return Err(CliError::Usage(format!("filter {:?} selects no checks", cfg.filter.unwrap_or_default())));
    }
    for r in &results {
        println!("{} {}", if r.pass { "PASS" } else { "FAIL" }, r.name);
    }
    let failed: Vec<String> = results.iter().filter(|r| !r.pass).map(|r| r.name.clone()).collect();
    let out = IdentitiesOutput { total: results.len(), passed: results.len() - failed.len(), failed, results };
    println!("{}/{} checks passed", out.passed, out.total);
    write_json(&args.out.join("report.json"), &out).map_err(io_failure)?;
    let rows: Vec<Vec<String>> = out.results.iter().map(IdentityCheckResult::csv_row).collect();
    write_csv(&args.out.join("summary.csv"), &IdentityCheckResult::CSV_HEADER, &rows).map_err(io_failure)?;
    write_manifest("verify-identities", args, &cfg, started)?;
    Ok(out.failed.is_empty())
}

/// A bench config file: one experiment or a list.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BenchConfig {
    Many { experiments: Vec<ExperimentConfig> },
    Single(ExperimentConfig),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchOutput {
    pub pass: bool,
    pub reports: Vec<BoundReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweeps: Vec<SweepReport>,
}

/// Parses `n=25,50,100`.
pub fn parse_sweep(text: &str) -> std::result::Result<Vec<usize>, String> {
    let (key, list) = text.split_once('=').ok_or_else(|| format!("--sweep expects KEY=LIST, got {text:?}"))?;
    if key.trim() != "n" {
        return Err(format!("only the key `n` can be swept, got {key:?}"));
    }
    list.split(',')
        .map(|v| v.trim().parse::<usize>().map_err(|e| format!("bad sweep value {v:?}: {e}")))
        .collect()
}

/// Runs the selected experiments; exit 0 iff every non-optimistic bound passes.
pub fn cmd_bench(args: &CommonArgs) -> i32 {
    finish(bench(args))
}

fn bench(args: &CommonArgs) -> CliResult<bool> {
    let started = Instant::now();
    let mut experiments = match &args.config {
        Some(p) => match read_config::<BenchConfig>(p)? {
            BenchConfig::Many { experiments } => experiments,
            BenchConfig::Single(e) => vec![e],
        },
        None => default_experiments(args.seed.unwrap_or(0)),
    };
    if let Some(name) = &args.observable {
        if !Observable::NAMES.contains(&name.as_str()) {
            return Err(CliError::Usage(format!(
                "unknown observable {name:?}; expected one of {}",
                Observable::NAMES.join(", ")
            )));
        }
        experiments.retain(|e| e.observable.name() == name);
    }
    if let Some(f) = &args.filter {
        experiments.retain(|e| e.observable.label().contains(f.as_str()) || e.ensemble.name().contains(f.as_str()));
    }
    if experiments.is_empty() {
        return Err(CliError::Usage("no experiment matches the selection".into()));
    }
    let sweep = args.sweep.as_deref().map(parse_sweep).transpose().map_err(CliError::Usage)?;
    for e in &mut experiments {
        if let Some(seed) = args.seed {
            e.seed = seed;
        }
        if let Some(m) = args.mode {
            e.mode = match m {
                ModeArg::Exact => BenchMode::Exact,
                ModeArg::Mc => BenchMode::MonteCarlo,
            };
        }
        if let Some(ns) = &sweep {
            e.n_sweep = Some(ns.clone());
        }
        e.validate().map_err(classify)?;
        if e.n_sweep.is_some() && matches!(e.ensemble, EnsembleConfig::Spec(_)) {
            return Err(CliError::Usage("an n-sweep needs a named ensemble family".into()));
        }
        Ensemble::new(e.ensemble.spec()).map_err(classify)?;
    }
    prepare_out(&args.out)?;
    let outcome = with_threads(args.threads, || -> crate::Result<BenchOutput> {
        let mut reports = Vec::new();
        let mut sweeps = Vec::new();
        for e in &experiments {
            if e.n_sweep.is_some() {
                let s = run_sweep(e)?;
                reports.extend(s.reports.iter().cloned());
                sweeps.push(s);
            } else {
                reports.push(run_experiment(e)?);
            }
        }
        let pass = reports.iter().all(|r| r.pass);
        Ok(BenchOutput { pass, reports, sweeps })
    })?
    .map_err(classify)?;
    for r in &outcome.reports {
        let status = match (r.pass, r.optimistic) {
            (true, false) => "PASS",
            (true, true) => "PASS (optimistic forms excluded)",
            (false, _) => "FAIL",
        };
        println!(
            "{status} {} on {}: lhs = {:.6e} ± {:.2e}, bound = {:.6e}",
            r.label, r.ensemble, r.lhs.value, r.lhs.se, r.bound_value
        );
    }
    for s in &outcome.sweeps {
        println!("sweep {} on {}: {} slope = {:.4}, bound slope = {:.4}", s.observable, s.ensemble, s.metric, s.slope, s.bound_slope);
    }
    write_json(&args.out.join("report.json"), &outcome).map_err(io_failure)?;
    let rows: Vec<Vec<String>> = outcome.reports.iter().map(BoundReport::csv_row).collect();
    write_csv(&args.out.join("summary.csv"), &BoundReport::CSV_HEADER, &rows).map_err(io_failure)?;
    if !outcome.sweeps.is_empty() {
        let rows: Vec<Vec<String>> = outcome.sweeps.iter().flat_map(SweepReport::csv_rows).collect();
        write_csv(&args.out.join("sweep.csv"), &SweepReport::CSV_HEADER, &rows).map_err(io_failure)?;
    }
    write_manifest("bench", args, &experiments, started)?;
    Ok(outcome.pass)
}

fn default_stats_p() -> Vec<f64> {
    vec![1.0, 2.0, 3.0]
}

fn default_msd_samples() -> u64 {
    20_000
}

/// Settings of `stats`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StatsConfig {
    pub ensemble: EnsembleConfig,
    #[serde(default = "default_stats_p")]
    pub p: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Draws for Monte Carlo statistics and for the spectral histogram.
    #[serde(default = "default_msd_samples")]
    pub samples: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(default)]
    pub mode: StatsMode,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatsMode {
    #[default]
    Exact,
    MonteCarlo,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            ensemble: EnsembleConfig::Family(EnsembleFamily::FiniteSupportToy { d: 2, n: 4, seed: 1 }),
            p: default_stats_p(),
            seed: 0,
            samples: default_msd_samples(),
            bins: None,
            mode: StatsMode::Exact,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StatsOutput {
    pub statistics: StatisticsReport,
    pub msd: SpectralHistogram,
}

/// Computes the statistics and the empirical spectral distribution of one ensemble.
pub fn cmd_stats(args: &CommonArgs) -> i32 {
    finish(stats(args))
}

fn stats(args: &CommonArgs) -> CliResult<bool> {
    let started = Instant::now();
    reject(
        "stats",
        &[
            ("--observable", args.observable.is_some()),
            ("--sweep", args.sweep.is_some()),
            ("--filter", args.filter.is_some()),
        ],
    )?;
    let mut cfg: StatsConfig = match &args.config {
        Some(p) => read_config(p)?,
        None => StatsConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(m) = args.mode {
        cfg.mode = match m {
            ModeArg::Exact => StatsMode::Exact,
            ModeArg::Mc => StatsMode::MonteCarlo,
        };
    }
    if cfg.samples == 0 {
        return Err(CliError::Usage("samples must be positive".into()));
    }
    let ens = Ensemble::new(cfg.ensemble.spec()).map_err(classify)?;
    let mode = match cfg.mode {
        StatsMode::Exact => EvalMode::exact(),
        StatsMode::MonteCarlo => EvalMode::monte_carlo(cfg.samples, cfg.seed),
    };
    prepare_out(&args.out)?;
    let out = with_threads(args.threads, || -> crate::Result<StatsOutput> {
        let statistics = ensemble_statistics(&ens, &cfg.p, mode)?;
        let stream = RngStream::new(cfg.seed, STREAM_MSD);
        let draws: Vec<_> = (0..cfg.samples).map(|k| ens.sample_sum(&stream, k)).collect();
        let msd = empirical_msd(&draws, cfg.bins)?;
        Ok(StatsOutput { statistics, msd })
    })?
    .map_err(classify)?;
    let s = &out.statistics;
    println!(
        "{}: d = {}, n = {}, sigma2 = {:.6e}, L = {:.6e}, L_inf = {:.6e}, M3 = {:.6e}",
        cfg.ensemble.name(),
        s.d,
        s.n,
        s.sigma2.value,
        s.l.value,
        s.l_inf.value,
        s.m3.value
    );
    write_json(&args.out.join("report.json"), &out).map_err(io_failure)?;
    write_csv(&args.out.join("summary.csv"), &StatisticsReport::CSV_HEADER, &s.csv_rows()).map_err(io_failure)?;
    write_csv(&args.out.join("msd.csv"), &SpectralHistogram::CSV_HEADER, &out.msd.csv_rows()).map_err(io_failure)?;
    write_manifest("stats", args, &cfg, started)?;
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_parsing() {
        assert_eq!(parse_sweep("n=25,50, 100").unwrap(), vec![25, 50, 100]);
        assert!(parse_sweep("d=2,3").is_err());
        assert!(parse_sweep("n").is_err());
        assert!(parse_sweep("n=a").is_err());
    }

    #[test]
    fn budget_errors_are_run_failures() {
        let e = classify(Error::BudgetExceeded { needed: 1e9, budget: 1e6 });
        assert_eq!(e.code(), EXIT_FAILURE);
        assert_eq!(classify(Error::Config("x".into())).code(), EXIT_USAGE);
    }
}
