//! Command-line harness for the joint Tx-Rx beamforming experiments.
//!
//! Exit codes: 0 success, 1 bad config, 2 all trials failed or infeasible,
//! 3 IO error.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dualbeam::harness::experiment::{
    aggregate, run_single, run_sweep_gamma, run_sweep_weight, run_verify_link, ExperimentKind,
    ExperimentSpec,
};
use dualbeam::harness::report::{emit_results, write_results, Metadata, OutputFormat, ResultRow};
use dualbeam::model::{config_from_json, SystemConfig};

#[derive(Parser)]
#[command(name = "dualbeam", version, about = "SINR-constrained joint Tx-Rx beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON system configuration.
    #[arg(long)]
    config: PathBuf,
    /// Base seed; trial t uses seed + t.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of channel draws per sweep point.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, default_value = "csv")]
    format: OutputFormatArg,
    /// Override the solver stopping threshold.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Override the solver iteration cap.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Aggregate as mean of dB values instead of dB of mean linear power.
    #[arg(long)]
    mean_db: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum OutputFormatArg {
    Csv,
    Jsonl,
}

impl From<OutputFormatArg> for OutputFormat {
    fn from(v: OutputFormatArg) -> Self {
        match v {
            OutputFormatArg::Csv => OutputFormat::Csv,
            OutputFormatArg::Jsonl => OutputFormat::JsonLines,
        }
    }
}

impl std::str::FromStr for OutputFormatArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(format!("unknown format {other:?} (expected csv or jsonl)")),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration over a set of channel draws, optionally
    /// relaxing the SINR targets on infeasible draws.
    Single {
        #[command(flatten)]
        common: CommonArgs,
        /// Multiplicative γ back-off per retry, in (0,1).
        #[arg(long, default_value_t = 0.5)]
        backoff: f64,
        /// Retries per infeasible draw.
        #[arg(long, default_value_t = 0)]
        retries: usize,
    },
    /// Total power versus SINR target sweep.
    SweepGamma {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated SINR targets in dB.
        #[arg(long, value_delimiter = ',', required = true)]
        gamma_db: Vec<f64>,
    },
    /// MS1 power versus MS1 weight sweep (other weights held at 1).
    SweepWeight {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated MS1 weights.
        #[arg(long, value_delimiter = ',', required = true)]
        weights: Vec<f64>,
    },
    /// Measure delivered per-substream SINR with QPSK symbols.
    VerifyLink {
        #[command(flatten)]
        common: CommonArgs,
        /// Symbols per trial.
        #[arg(long, default_value_t = 100_000)]
        symbols: usize,
    },
}

fn load_config(common: &CommonArgs) -> Result<SystemConfig, String> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| format!("{}: {e}", common.config.display()))?;
    let mut config = config_from_json(&text).map_err(|e| e.to_string())?;
    if let Some(eps) = common.epsilon {
        config.epsilon = eps;
    }
    if let Some(iters) = common.max_iters {
        config.max_iters = iters;
    }
    if !(config.epsilon > 0.0) || config.max_iters < 1 {
        return Err("epsilon must be positive and max_iters >= 1".into());
    }
    Ok(config)
}

fn emit(rows: &[ResultRow], meta: &Metadata, common: &CommonArgs) -> Result<(), String> {
    let format: OutputFormat = common.format.into();
    match &common.out {
        Some(path) => emit_results(rows, meta, format, path).map_err(|e| e.to_string()),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_results(rows, meta, format, &mut lock).map_err(|e| e.to_string())
        }
    }
}

fn print_summary(rows: &[ResultRow], mean_db: bool) {
    let stderr = std::io::stderr();
    let mut err = stderr.lock();
    for agg in aggregate(rows, mean_db) {
        let power = agg
            .mean_total_power_db
            .map(|p| format!("{p:.3} dB"))
            .unwrap_or_else(|| "n/a".into());
        let ms1 = agg
            .mean_ms1_power_db
            .map(|p| format!("{p:.3} dB"))
            .unwrap_or_else(|| "n/a".into());
        let _ = writeln!(
            err,
            "sweep={:>8.3}  mean_total={power:>12}  mean_ms1={ms1:>12}  feasible={}  infeasible={}  failed={}",
            agg.sweep_value, agg.feasible, agg.infeasible, agg.failed
        );
    }
}

fn run() -> Result<bool, (u8, String)> {
    let cli = Cli::parse();
    let (common, spec) = match &cli.command {
        Command::Single { common, backoff, retries } => {
            let config = load_config(common).map_err(|e| (1, e))?;
            if !(*backoff > 0.0 && *backoff < 1.0) {
                return Err((1, "backoff must be in (0,1)".into()));
            }
            let mut spec = ExperimentSpec::new(ExperimentKind::Single, config);
            spec.backoff = *backoff;
            spec.max_retries = *retries;
            (common, spec)
        }
        Command::SweepGamma { common, gamma_db } => {
            let config = load_config(common).map_err(|e| (1, e))?;
            if gamma_db.iter().any(|g| !g.is_finite()) {
                return Err((1, "gamma grid must be finite".into()));
            }
            let mut spec = ExperimentSpec::new(ExperimentKind::SweepGamma, config);
            spec.gamma_db_grid = gamma_db.clone();
            (common, spec)
        }
        Command::SweepWeight { common, weights } => {
            let config = load_config(common).map_err(|e| (1, e))?;
            if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                return Err((1, "weights must be finite and positive".into()));
            }
            let mut spec = ExperimentSpec::new(ExperimentKind::SweepWeight, config);
            spec.weight_grid = weights.clone();
            (common, spec)
        }
        Command::VerifyLink { common, symbols } => {
            let config = load_config(common).map_err(|e| (1, e))?;
            let mut spec = ExperimentSpec::new(ExperimentKind::VerifyLink, config);
            spec.n_sym = *symbols;
            (common, spec)
        }
    };

    let mut spec = spec;
    spec.trials = common.trials.max(1);
    spec.seed0 = common.seed;

    let rows = match spec.kind {
        ExperimentKind::Single => run_single(&spec),
        ExperimentKind::SweepGamma => run_sweep_gamma(&spec),
        ExperimentKind::SweepWeight => run_sweep_weight(&spec),
        ExperimentKind::VerifyLink => run_verify_link(&spec),
    };

    let meta = Metadata::new(&spec.config, spec.seed0, spec.trials);
    emit(&rows, &meta, common).map_err(|e| (3, e))?;
    print_summary(&rows, common.mean_db);

    Ok(rows.iter().any(|r| r.status == "converged"))
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::from(0),
        Ok(false) => {
            eprintln!("no trial converged");
            ExitCode::from(2)
        }
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
