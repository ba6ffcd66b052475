//! Command-line runner for the routing experimentation platform.
//!
//! Three modes share one TOML config:
//! - `bench`: evaluate every backend once per corpus case and report
//!   benchmark-table summaries plus pairwise accuracy tests.
//! - `experiment`: run the randomized multi-arm experiment end to end and
//!   write the manifest, session log, analysis report, decision report, and
//!   scatter CSV.
//! - `analyze`: recompute the full analysis from an archived session log,
//!   independent of live backends.
//!
//! Exit codes: 0 success, 1 config error, 2 runtime error, 3 gate/decision
//! evaluation impossible.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use frontdoor::analysis::{self, AnalysisError, AnalysisParams};
use frontdoor::config::{ConfigError, RunConfig};
use frontdoor::engine::{build_gateway, generate_traffic, run_experiment};
use frontdoor::report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Bench,
    Experiment,
    Analyze,
}

#[derive(Debug, Parser)]
#[command(name = "frontdoor", about = "Routing experimentation platform runner")]
struct Cli {
    /// Run mode.
    #[arg(long, value_enum)]
    mode: Mode,

    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Master seed override (defaults to the config's master_seed).
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for all artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Session log to analyze (analyze mode; defaults to OUT/session_log.jsonl).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
    DecisionImpossible(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Decision(_) | AnalysisError::EmptyArm(_) => {
                CliError::DecisionImpossible(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<report::ReportError> for CliError {
    fn from(e: report::ReportError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::DecisionImpossible(msg)) => {
            eprintln!("gate/decision evaluation impossible: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut config = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.experiment.master_seed = seed;
    }
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", cli.out.display())))?;
    match cli.mode {
        Mode::Bench => cmd_bench(&config, cli),
        Mode::Experiment => cmd_experiment(&config, cli),
        Mode::Analyze => cmd_analyze(&config, cli),
    }
}

fn cmd_bench(config: &RunConfig, cli: &Cli) -> Result<(), CliError> {
    if config.backends.len() < 2 {
        return Err(CliError::Config(
            "bench mode requires at least 2 backends (pairwise tests are undefined otherwise)"
                .into(),
        ));
    }
    let corpus = config.load_corpus()?;
    let backends = config.build_backends()?;
    let report_data = analysis::bench(
        &backends,
        &corpus,
        config.experiment.master_seed,
        config.experiment.alpha,
    )?;
    let path = cli.out.join("bench_report.json");
    report::write_json(&path, &report_data)?;
    println!("wrote {}", path.display());
    for arm in &report_data.arms {
        println!(
            "  {} {:<16} accuracy {:.4}  parse_rate {:.4}  f1_macro {:.4}  median {:.0} ms  p95 {:.0} ms",
            arm.arm, arm.backend, arm.accuracy, arm.parse_rate, arm.f1_macro, arm.median_ms,
            arm.p95_ms
        );
    }
    Ok(())
}

fn analysis_params(config: &RunConfig) -> AnalysisParams {
    AnalysisParams::new(
        config.experiment.alpha,
        config.gates,
        config.experiment.master_seed,
        config.experiment.interim_at as f64 / config.experiment.sessions_per_arm as f64,
    )
}

fn cmd_experiment(config: &RunConfig, cli: &Cli) -> Result<(), CliError> {
    let started_at = report::now_rfc3339();
    let corpus = config.load_corpus()?;
    let backends = config.build_backends()?;
    let meta = analysis::arm_meta(&backends);
    let arm_count = backends.len() + 1;
    let gateway = build_gateway(backends, config.experiment.master_seed, &corpus)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let plan = generate_traffic(
        arm_count,
        config.experiment.sessions_per_arm,
        config.experiment.master_seed,
        &corpus,
    );
    let run = run_experiment(&gateway, &plan, config.experiment.interim_at)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let report_data = analysis::analyze(
        &run.records,
        Some(&run.interim_records),
        &corpus,
        &meta,
        &analysis_params(config),
    )?;

    let manifest = report::RunManifest {
        config: config.clone(),
        corpus_digest: corpus.digest().to_string(),
        master_seed: config.experiment.master_seed,
        started_at,
        finished_at: report::now_rfc3339(),
        substitutions: vec!["stratification=family".to_string()],
    };
    report::write_json(cli.out.join("manifest.json"), &manifest)?;
    report::write_session_log(cli.out.join("session_log.jsonl"), &run.records)?;
    report::write_json(cli.out.join("analysis_report.json"), &report_data)?;
    report::write_json(cli.out.join("decision_report.json"), &report_data.decision)?;
    report::write_scatter_csv(cli.out.join("scatter.csv"), &report_data.arms)?;

    println!(
        "experiment complete: {} records across {} arms -> {}",
        run.records.len(),
        arm_count,
        cli.out.display()
    );
    println!(
        "decision: row {} fired -> {}",
        report_data.decision.row_fired,
        serde_json::to_string(&report_data.decision.action)
            .map_err(|e| CliError::Runtime(e.to_string()))?
    );
    Ok(())
}

fn cmd_analyze(config: &RunConfig, cli: &Cli) -> Result<(), CliError> {
    let log_path = cli
        .log
        .clone()
        .unwrap_or_else(|| cli.out.join("session_log.jsonl"));
    let records = report::read_session_log(&log_path)?;
    let corpus = config.load_corpus()?;
    let backends = config.build_backends()?;
    let meta = analysis::arm_meta(&backends);
    let arm_count = backends.len() + 1;

    // The log preserves issue order (round-robin across arms), so the interim
    // snapshot is exactly the first interim_at records of each arm.
    let mut per_arm_seen = vec![0usize; arm_count];
    let interim: Vec<_> = records
        .iter()
        .filter(|r| {
            let seen = &mut per_arm_seen[r.arm.0.min(arm_count - 1)];
            *seen += 1;
            *seen <= config.experiment.interim_at
        })
        .cloned()
        .collect();

    let report_data = analysis::analyze(
        &records,
        Some(&interim),
        &corpus,
        &meta,
        &analysis_params(config),
    )?;
    let path = cli.out.join("analysis_report.json");
    report::write_json(&path, &report_data)?;
    report::write_json(cli.out.join("decision_report.json"), &report_data.decision)?;
    println!(
        "analyzed {} records from {} -> {}",
        records.len(),
        log_path.display(),
        path.display()
    );
    Ok(())
}
