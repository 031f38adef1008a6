//! `boro`: prescriptions, bootstrap disappointment and experiment sweeps from the command line.
//!
//! Exit codes: 0 on success, 2 on bad input (data, config or names), 3 on
//! solver failure. Diagnostics go to stderr, data to stdout or files.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use boro_core::experiments::{ProximityKind, VarianceConvention};
use boro_core::learners::Formulation;
use boro_core::smoothers::Smoother;
use clap::{Args, Parser, Subcommand};

use config::{parse_keyword, parse_seeds, LossKind, OneOrMany, RunConfig, Seeds};
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "boro",
    version,
    about = "Bootstrap-robust prescriptive analytics"
)]
struct Cli {
    /// TOML run configuration; command-line flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Base seed; falls back to the config file, then BORO_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Nominal and robust prescription at a context.
    Prescribe {
        /// Training data CSV (`# dims d k` line, header x1..xd,y1..yk).
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        keys: Keys,
    },
    /// Bootstrap disappointment of prescriptions over a radius grid.
    Bootstrap {
        #[arg(long)]
        data: PathBuf,
        /// Output CSV (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        keys: Keys,
    },
    /// Reproduces an experiment sweep into a directory of CSVs.
    Experiment {
        /// `newsvendor` or `portfolio` (or the `experiment` config key).
        name: Option<String>,
        /// Output directory (default: results/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        keys: Keys,
    },
    /// Radius achieving a target disappointment.
    CalibrateRadius {
        /// Training data; required for nearest neighbors, optional otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Sample size (Nadaraya-Watson without data).
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        keys: Keys,
    },
}

/// Flags mirroring the config keys.
#[derive(Debug, Args)]
struct Keys {
    #[arg(long, value_parser = parse_keyword::<LossKind>)]
    loss: Option<LossKind>,
    #[arg(long, value_parser = parse_keyword::<Formulation>)]
    formulation: Option<Formulation>,
    #[arg(long, value_parser = parse_keyword::<Smoother>)]
    smoother: Option<Smoother>,
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_parser = parse_keyword::<ProximityKind>)]
    proximity: Option<ProximityKind>,
    /// Ambiguity-set distance: bootstrap (relative entropy), pearson or burg.
    #[arg(long)]
    distance: Option<String>,
    /// Context covariates, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    context: Option<Vec<f64>>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    r_grid: Option<Vec<f64>>,
    /// Target disappointment(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    target_b: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    /// Bootstrap resamples.
    #[arg(long)]
    m: Option<usize>,
    /// Training seeds: a count or a comma-separated list.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<Seeds>,
    #[arg(long, value_parser = parse_keyword::<VarianceConvention>)]
    variance_convention: Option<VarianceConvention>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    test_sets: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
}

impl Keys {
    fn into_config(self) -> RunConfig {
        RunConfig {
            loss: self.loss,
            formulation: self.formulation,
            smoother: self.smoother,
            bandwidth: self.bandwidth,
            k: self.k,
            proximity: self.proximity,
            distance: self.distance,
            context: self.context,
            radius: self.radius,
            r_grid: self.r_grid,
            target_b: self.target_b.map(OneOrMany::Many),
            n_grid: self.n_grid,
            m: self.m,
            seeds: self.seeds,
            variance_convention: self.variance_convention,
            folds: self.folds,
            test_sets: self.test_sets,
            test_size: self.test_size,
            max_iter: self.max_iter,
            ..Default::default()
        }
    }
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var("BORO_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| CliError::Config(format!("BORO_SEED='{v}': {e}"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Config(format!("BORO_SEED: {e}"))),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let (keys, job) = match cli.command {
        Command::Prescribe { ref data, keys } => (keys, commands::Job::Prescribe(data.clone())),
        Command::Bootstrap {
            ref data,
            ref out,
            keys,
        } => (keys, commands::Job::Bootstrap(data.clone(), out.clone())),
        Command::Experiment {
            ref name,
            ref out,
            keys,
        } => (keys, commands::Job::Experiment(name.clone(), out.clone())),
        Command::CalibrateRadius { ref data, n, keys } => {
            (keys, commands::Job::Calibrate(data.clone(), n))
        }
    };
    let mut flags = keys.into_config();
    flags.seed = cli.seed;
    flags.threads = cli.threads;
    let mut cfg = file.merged(flags);
    if cfg.seed.is_none() {
        cfg.seed = Some(env_seed()?.unwrap_or(0));
    }
    if let Some(t) = cfg.threads {
        if t == 0 {
            return Err(CliError::Config("threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    commands::dispatch(job, cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
