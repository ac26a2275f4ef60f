use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use egd_cli::config::{experiment_table, AlgorithmName, BetaSetting, ConfigError, Experiment, ExperimentConfig};
use egd_cli::run_experiment;

#[derive(Parser)]
#[command(name = "egd", version, about = "Exponential step-size gradient descent experiments", after_help = experiment_table())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a deterministic optimization experiment (analytic_rates, effects_eta_beta, two_phase, diagonal).
    Optimize {
        /// Experiment name; may instead come from --config.
        #[arg(long)]
        experiment: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a statistical rate study over a grid of sample sizes.
    RateStudy {
        /// Experiment name; may instead come from --config.
        #[arg(long)]
        experiment: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the numerical verification suite; exits nonzero on any failed check.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Reproduce the data behind one figure (id or experiment name).
    Figure {
        id: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Default)]
struct Common {
    /// JSON config or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<f64>,
    /// A number in (0, 1] or "auto".
    #[arg(long)]
    beta: Option<BetaSetting>,
    #[arg(long, allow_negative_numbers = true)]
    c1: Option<f64>,
    /// Comma separated, e.g. 1024,4096,16384.
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Comma separated subset of egd, gd, em.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<AlgorithmName>>,
    /// Write one trajectory CSV per (algorithm, n, replicate).
    #[arg(long)]
    trajectories: bool,
    #[arg(long, default_value = "results")]
    output_dir: PathBuf,
}

enum Failure {
    Config(ConfigError),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<ConfigError>() {
            Ok(c) => Self::Config(c),
            Err(e) => Self::Runtime(e),
        }
    }
}

fn parse_experiment(name: &str) -> Result<Experiment, ConfigError> {
    Experiment::from_figure_id(name)
        .ok_or_else(|| ConfigError::new("experiment", format!("unknown experiment {name:?}")))
}

fn build_config(experiment: Option<Experiment>, common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(Failure::Runtime)?;
            let cfg = ExperimentConfig::from_json(&text)?;
            if let Some(e) = experiment.filter(|e| *e != cfg.experiment) {
                return Err(ConfigError::new(
                    "experiment",
                    format!("{e} requested but the config file describes {}", cfg.experiment),
                )
                .into());
            }
            cfg
        }
        None => {
            let e = experiment.ok_or_else(|| ConfigError::new("experiment", "pass --experiment or --config"))?;
            ExperimentConfig::defaults(e)
        }
    };
    if let Some(v) = common.eta {
        cfg.eta = v;
    }
    if let Some(v) = common.beta {
        cfg.beta = v;
    }
    if let Some(v) = common.c1 {
        cfg.c1 = Some(v);
    }
    if let Some(v) = &common.n_grid {
        cfg.n_grid = v.clone();
    }
    if let Some(v) = common.seed {
        cfg.base_seed = v;
    }
    if let Some(v) = common.replicates {
        cfg.replicates = v;
    }
    if let Some(v) = common.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = &common.algorithms {
        cfg.algorithms = v.clone();
    }
    if common.trajectories {
        cfg.write_trajectories = true;
    }
    cfg.output_dir = Some(common.output_dir.clone());
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let (experiment, common, kind) = match &cli.command {
        Command::Optimize { experiment, common } => {
            (experiment.as_deref().map(parse_experiment).transpose()?, common, Some(false))
        }
        Command::RateStudy { experiment, common } => {
            (experiment.as_deref().map(parse_experiment).transpose()?, common, Some(true))
        }
        Command::Verify { common } => (Some(Experiment::Verify), common, None),
        Command::Figure { id, common } => (Some(parse_experiment(id)?), common, None),
    };
    let cfg = build_config(experiment, common)?;
    if let Some(want_study) = kind {
        if cfg.experiment.is_rate_study() != want_study || cfg.experiment == Experiment::Verify {
            let cmd = if want_study { "rate-study" } else { "optimize" };
            return Err(ConfigError::new("experiment", format!("{} is not a `{cmd}` experiment", cfg.experiment)).into());
        }
    }
    let out = cfg.output_dir.clone().expect("set by build_config");
    log::info!("running {} into {}", cfg.experiment, out.display());
    let outcome = run_experiment(&cfg)?;
    outcome.artifacts.write_all(&out)?;
    for name in outcome.artifacts.files.keys() {
        println!("{}", out.join(name).display());
    }
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        for f in &outcome.failures {
            eprintln!("failed: {f}");
        }
        Err(Failure::Runtime(anyhow::anyhow!("{} failure(s)", outcome.failures.len())))
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("EGD_THREADS") {
        let n: usize = v.parse().with_context(|| format!("EGD_THREADS={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("invalid configuration: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
