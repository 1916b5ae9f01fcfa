//! `graphreach` command-line interface.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graphreach::{Error, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(
    name = "graphreach",
    version,
    about = "Position-aware graph embeddings from random-walk reachability"
)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand. Values are applied in order: config
/// file, subcommand flags, then `--set` overrides.
#[derive(Debug, Args)]
struct Common {
    /// Plain-text `key = value` config file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one config key; repeatable (e.g. `--set model.hidden=16`).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output directory (config key `output`).
    #[arg(long, global = true, value_name = "DIR")]
    output: Option<PathBuf>,

    /// Root seed of the first run (config key `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of runs; run i uses root seed `seed + i` (config key `seeds`).
    #[arg(long, global = true)]
    seeds: Option<usize>,

    /// Use 10 runs, the repeat count of the published protocol.
    #[arg(long, global = true, conflicts_with = "seeds")]
    paper: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as edge and label files.
    Gen {
        /// Generator: communities or grid.
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Sample random walks for each run seed and cache them.
    Walks,
    /// Select anchors for each run seed and write anchor files.
    Anchors {
        /// greedy, frequency or random.
        #[arg(long)]
        strategy: Option<String>,
        /// Anchor count: an integer, `log2n` for ⌈(ln n)²⌉, or a percentage such as `2.5%`.
        #[arg(long)]
        k: Option<String>,
    },
    /// Train one model per run seed; writes checkpoints, manifests and metrics.
    Train,
    /// Score saved checkpoints on a split.
    Eval {
        /// train, val or test.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Run the collusion attack against saved checkpoints (trains first when missing).
    Attack {
        /// Attack samples per run (config key `attack.samples`).
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train over a list of values for one parameter.
    Sweep {
        /// Parameter to vary: walks.length, walks.per_node or anchors.k.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. `2,4,8,16`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Maximum configurations run at once.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

/// Failure with its exit code: 2 config, 3 data, 4 runtime.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => 2,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::InvalidInput(_)
            | Error::TooLarge(_)
            | Error::StaleCache(_) => 3,
            Error::Shape { .. } | Error::NonFinite(_) | Error::Divergence { .. } => 4,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn build_config(common: &Common, command: &Command) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let mut pairs: Vec<String> = Vec::new();
    if let Some(o) = &common.output {
        pairs.push(format!("output={}", o.display()));
    }
    if let Some(s) = common.seed {
        pairs.push(format!("seed={s}"));
    }
    if let Some(s) = common.seeds {
        pairs.push(format!("seeds={s}"));
    }
    if common.paper {
        pairs.push("seeds=10".into());
    }
    match command {
        Command::Gen { dataset: Some(d) } => pairs.push(format!("dataset.kind={d}")),
        Command::Anchors { strategy, k } => {
            pairs.extend(strategy.iter().map(|s| format!("anchors.strategy={s}")));
            pairs.extend(k.iter().map(|k| format!("anchors.k={k}")));
        }
        Command::Attack { samples: Some(s) } => pairs.push(format!("attack.samples={s}")),
        _ => {}
    }
    pairs.extend(common.overrides.iter().cloned());
    for p in &pairs {
        cfg.set_pair(p).map_err(|e| Failure::config(e.to_string()))?;
    }
    cfg.validate().map_err(|e| Failure::config(e.to_string()))?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = build_config(&cli.common, &cli.command)?;
    match cli.command {
        Command::Gen { .. } => commands::gen(&cfg),
        Command::Walks => commands::walks(&cfg),
        Command::Anchors { .. } => commands::anchors(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Eval { split } => commands::eval(&cfg, split.parse().map_err(Failure::from)?),
        Command::Attack { .. } => commands::attack(&cfg),
        Command::Sweep { param, values, jobs } => commands::sweep(&cfg, &param, &values, jobs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message.lines().next().unwrap_or_default());
            ExitCode::from(f.code)
        }
    }
}
