//! Command-line front end. Every command is also callable as a function so
//! examples and tests can drive it without a subprocess.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::evaluation::{emit_reports, summarize, RunSummary, BOUND_THRESHOLD_PCT, IMBALANCE_THRESHOLD_PCT};
use crate::ledger::{Ledger, LedgerConfig, LedgerReport};
use crate::policy_gradient::{evaluate_policy, train_curriculum, Checkpoint, TrainError, TrainingOutcome};
use crate::profiles::{perturb, save_profile, PerturbationSpec};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const PROFILE_FILE: &str = "profile.csv";

/// Account debited for each hourly settlement.
pub const LOAD_ACCOUNT: &str = "load";
/// Account credited for each hourly settlement.
pub const GENERATOR_ACCOUNT: &str = "generator_pool";

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("training diverged: {0}")]
    Divergence(TrainError),
    #[error("{0}")]
    Runtime(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Usage(_) | CommandError::Config(_) => 2,
            CommandError::Divergence(_) => 3,
            CommandError::Runtime(_) => 1,
        }
    }
}

impl From<TrainError> for CommandError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteGradient => CommandError::Divergence(e),
            TrainError::Config(m) => CommandError::Usage(m),
            other => CommandError::Runtime(other.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CommandError {
    CommandError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "dayahead", version, about = "Day-ahead market agent: train, evaluate, settle")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Parallel trajectory collectors.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train through the curriculum; writes a checkpoint and the training log.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        curriculum_scale: Option<f64>,
    },
    /// Evaluate a checkpoint and write the per-hour CSVs.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Defaults to `<out-dir>/checkpoint.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        deterministic: Option<bool>,
    },
    /// Run one day and settle every hour on the simulated ledger.
    SimulateDay {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Submits the settlement for this hour twice.
        #[arg(long, hide = true)]
        inject_duplicate_hour: Option<usize>,
    },
    /// Submit synthetic settlements and report latency and throughput.
    BenchLedger {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 203)]
        n_txns: usize,
        #[arg(long)]
        round_duration: Option<f64>,
        #[arg(long)]
        extra_confirm_rounds: Option<u64>,
    },
    /// Write the synthetic profile, optionally perturbed.
    MakeProfile {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 0.0)]
        amplitude: f64,
    },
}

/// Loads the config file (or defaults) and applies the shared overrides.
pub fn resolve_config(common: &CommonArgs) -> Result<RunConfig, CommandError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.trainer.seed = seed;
        config.evaluation.seed = seed;
    }
    if let Some(dir) = &common.out_dir {
        config.out_dir = dir.clone();
    }
    if let Some(w) = common.workers {
        config.workers = w;
    }
    config.validate()?;
    Ok(config)
}

pub struct TrainArtifacts {
    pub checkpoint_path: PathBuf,
    pub log_path: PathBuf,
    pub outcome: TrainingOutcome,
}

pub fn cmd_train(config: &RunConfig) -> Result<TrainArtifacts, CommandError> {
    let env = config.build_env()?;
    let stages = config.scaled_stages();
    let outcome = train_curriculum(&env, &stages, &config.trainer, config.workers, |row| {
        log::debug!(
            "stage {} batch {} steps {} objective {:.4} success {:.2}",
            row.stage,
            row.batch,
            row.timesteps,
            row.objective,
            row.success_rate
        );
    })?;
    fs::create_dir_all(&config.out_dir).map_err(runtime)?;
    let checkpoint_path = config.out_dir.join(CHECKPOINT_FILE);
    let log_path = config.out_dir.join(TRAINING_LOG_FILE);
    Checkpoint::new(config.trainer.clone(), outcome.position, outcome.params.clone())
        .save(&checkpoint_path)
        .map_err(runtime)?;
    fs::write(&log_path, outcome.log.to_csv()).map_err(runtime)?;
    Ok(TrainArtifacts { checkpoint_path, log_path, outcome })
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CommandError> {
    Checkpoint::load(path).map_err(|e| CommandError::Usage(format!("checkpoint {}: {e:#}", path.display())))
}

/// Evaluates `checkpoint` and writes the evaluation CSVs into the output
/// directory (with an empty ledger report).
pub fn cmd_evaluate(config: &RunConfig, checkpoint: &Path) -> Result<RunSummary, CommandError> {
    let ck = load_checkpoint(checkpoint)?;
    let env = config.build_env()?;
    let ev = &config.evaluation;
    let run = evaluate_policy(&ck.params, &env, ev.episodes, ev.deterministic, ev.seed).map_err(runtime)?;
    let summary = summarize(&run.hours).map_err(runtime)?;
    emit_reports(&summary, &LedgerReport::empty(), &config.out_dir).map_err(runtime)?;
    Ok(summary)
}

/// One deterministic day; each hour's supply is settled from the load
/// account to the generator pool and a round is produced per hour.
pub fn cmd_simulate_day(
    config: &RunConfig,
    checkpoint: &Path,
    inject_duplicate_hour: Option<usize>,
) -> Result<(RunSummary, LedgerReport), CommandError> {
    let ck = load_checkpoint(checkpoint)?;
    let env = config.build_env()?;
    let run = evaluate_policy(&ck.params, &env, 1, true, config.evaluation.seed).map_err(runtime)?;
    let mut ledger = Ledger::new(config.ledger.clone()).map_err(runtime)?;
    ledger.register(LOAD_ACCOUNT).map_err(runtime)?;
    ledger.register(GENERATOR_ACCOUNT).map_err(runtime)?;
    for h in &run.hours {
        let copies = if inject_duplicate_hour == Some(h.hour) { 2 } else { 1 };
        for _ in 0..copies {
            ledger.submit_settlement(LOAD_ACCOUNT, GENERATOR_ACCOUNT, h.hour, h.price, h.supply);
        }
        ledger.advance_round();
    }
    while ledger.pending() > 0 {
        ledger.advance_round();
    }
    let report = ledger.report();
    let summary = summarize(&run.hours).map_err(runtime)?;
    emit_reports(&summary, &report, &config.out_dir).map_err(runtime)?;
    Ok((summary, report))
}

/// Submits `n_txns` settlements in one round over enough account pairs to
/// keep every trade key distinct, then produces rounds until all confirm.
pub fn cmd_bench_ledger(ledger_config: &LedgerConfig, n_txns: usize, seed: u64) -> Result<LedgerReport, CommandError> {
    let mut ledger = Ledger::new(ledger_config.clone()).map_err(runtime)?;
    let pairs = n_txns.div_ceil(24).max(1);
    let accounts: Vec<String> = (0..=pairs).map(|i| format!("bench_{i:03}")).collect();
    for a in &accounts {
        ledger.register(a).map_err(runtime)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (ledger_config.price_min, ledger_config.price_max.min(200.0).max(ledger_config.price_min));
    for i in 0..n_txns {
        let pair = i / 24;
        let price = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let quantity = rng.random_range(1.0..100.0);
        ledger.submit_settlement(&accounts[pair], &accounts[pair + 1], i % 24, price, quantity);
    }
    while ledger.pending() > 0 {
        ledger.advance_round();
    }
    Ok(ledger.report())
}

fn print_summary(summary: &RunSummary) {
    println!(
        "hours={} imbalance<= {IMBALANCE_THRESHOLD_PCT}%: {:.1}%  bound<= {BOUND_THRESHOLD_PCT}%: {:.1}%",
        summary.hours.len(),
        100.0 * summary.frac_imbalance_within,
        100.0 * summary.frac_bound_within
    );
    println!(
        "mean imbalance gap {:.3}%  max {:.3}%  mean bound gap {:.3}%  max {:.3}%",
        summary.mean_imbalance_gap, summary.max_imbalance_gap, summary.mean_bound_gap, summary.max_bound_gap
    );
}

fn print_ledger(report: &LedgerReport) {
    println!(
        "submitted={} confirmed={} rejected={:?} avg_latency_s={:.4} throughput_txn_per_s={:.4}",
        report.submitted, report.confirmed, report.rejected, report.avg_latency_s, report.throughput_txn_per_s
    );
}

fn checkpoint_path(config: &RunConfig, explicit: Option<PathBuf>) -> PathBuf {
    explicit.unwrap_or_else(|| config.out_dir.join(CHECKPOINT_FILE))
}

pub fn execute(command: Command) -> Result<(), CommandError> {
    match command {
        Command::Train { common, curriculum_scale } => {
            let mut config = resolve_config(&common)?;
            if let Some(s) = curriculum_scale {
                config.curriculum.scale = s;
                config.validate()?;
            }
            let art = cmd_train(&config)?;
            let last = art.outcome.log.rows.last();
            println!(
                "trained {} steps; final success rate {:.2}",
                art.outcome.position.timesteps,
                last.map_or(0.0, |r| r.success_rate)
            );
            println!("checkpoint: {}", art.checkpoint_path.display());
            println!("training log: {}", art.log_path.display());
        }
        Command::Evaluate { common, checkpoint, episodes, deterministic } => {
            let mut config = resolve_config(&common)?;
            if let Some(n) = episodes {
                config.evaluation.episodes = n;
            }
            if let Some(d) = deterministic {
                config.evaluation.deterministic = d;
            }
            config.validate()?;
            let path = checkpoint_path(&config, checkpoint);
            print_summary(&cmd_evaluate(&config, &path)?);
        }
        Command::SimulateDay { common, checkpoint, inject_duplicate_hour } => {
            let config = resolve_config(&common)?;
            let path = checkpoint_path(&config, checkpoint);
            let (summary, report) = cmd_simulate_day(&config, &path, inject_duplicate_hour)?;
            print_summary(&summary);
            print_ledger(&report);
        }
        Command::BenchLedger { common, n_txns, round_duration, extra_confirm_rounds } => {
            let mut config = resolve_config(&common)?;
            if let Some(d) = round_duration {
                config.ledger.round_duration = d;
            }
            if let Some(x) = extra_confirm_rounds {
                config.ledger.extra_confirm_rounds = x;
            }
            config.validate()?;
            let report = cmd_bench_ledger(&config.ledger, n_txns, config.evaluation.seed)?;
            report.write(&config.out_dir).map_err(runtime)?;
            print_ledger(&report);
        }
        Command::MakeProfile { common, amplitude } => {
            let config = resolve_config(&common)?;
            let spec = PerturbationSpec::new(amplitude, config.evaluation.seed)
                .map_err(|e| CommandError::Usage(e.to_string()))?;
            let profile = perturb(&config.load_profile()?, &spec);
            let path = config.out_dir.join(PROFILE_FILE);
            save_profile(&profile, &path).map_err(runtime)?;
            println!("profile: {}", path.display());
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
