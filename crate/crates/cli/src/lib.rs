//! `propgen`: search, evaluate and benchmark propagation mechanisms.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{BackendSpec, RunConfig, SplitSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "propgen", version, about = "LLM-guided search over spectral GNN propagation mechanisms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command.
#[derive(Debug, Args, Clone, Default)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    dataset: Option<PathBuf>,
    /// `a,b,c` fractions or percentages, `from-file`, or `auto`.
    #[arg(long, value_name = "SPEC")]
    split: Option<SplitSpec>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "PATH")]
    out_dir: Option<PathBuf>,
    #[arg(long, value_name = "SECS")]
    timeout_secs: Option<u64>,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full evolutionary run.
    Search {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        replay_file: Option<PathBuf>,
        #[arg(long)]
        generations: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Train and score one mechanism.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Builtin name or path to a program file.
        #[arg(long, value_name = "NAME|PATH")]
        mechanism: String,
    },
    /// Accuracy matrix of mechanisms across datasets.
    Xeval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true, value_name = "PATHS")]
        datasets: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true, value_name = "NAMES")]
        mechanisms: Vec<String>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write a synthetic graph as dataset JSON.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 500)]
        nodes: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 0.8)]
        homophily: f64,
        #[arg(long, default_value_t = 6.0)]
        avg_degree: f64,
        #[arg(long, default_value_t = 16)]
        features: usize,
        #[arg(long, default_value_t = 1.0)]
        signal: f64,
        /// Output file; defaults to `dataset.json` in the output directory.
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Parse and shape-check a program, print its canonical form.
    Inspect {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "NAME|PATH")]
        mechanism: String,
        /// `n,f,h,c`; taken from --dataset when given.
        #[arg(long, value_name = "N,F,H,C")]
        dims: Option<String>,
    },
    /// Evaluate every builtin mechanism on one dataset.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        workers: Option<usize>,
    },
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn resolve(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &common.dataset {
        cfg.dataset = Some(d.clone());
    }
    if let Some(s) = common.split {
        cfg.split = s;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out_dir {
        cfg.out_dir = Some(o.clone());
    }
    if let Some(t) = common.timeout_secs {
        cfg.search.train.timeout_seconds = t as f64;
    }
    cfg.propagate_seed();
    cfg.search
        .train
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Search {
            common,
            replay_file,
            generations,
            workers,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(path) = replay_file {
                cfg.backend = Some(BackendSpec::Replay { path });
            }
            if let Some(g) = generations {
                cfg.search.generations = g;
            }
            if let Some(w) = workers {
                cfg.search.workers = w;
            }
            commands::search(&cfg, common.force)
        }
        Command::Eval { common, mechanism } => {
            commands::eval(&resolve(&common)?, &mechanism, common.force)
        }
        Command::Xeval {
            common,
            datasets,
            mechanisms,
            workers,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(w) = workers {
                cfg.search.workers = w;
            }
            commands::xeval(&cfg, &datasets, &mechanisms, common.force)
        }
        Command::GenData {
            common,
            nodes,
            classes,
            homophily,
            avg_degree,
            features,
            signal,
            output,
        } => {
            let cfg = resolve(&common)?;
            let spec = propgen_core::graph::SyntheticSpec {
                n: nodes,
                classes,
                homophily,
                avg_degree,
                feature_dim: features,
                signal,
                seed: cfg.seed,
            };
            commands::gen_data(&cfg, &spec, common.split, output, common.force)
        }
        Command::Inspect {
            common,
            mechanism,
            dims,
        } => commands::inspect(&resolve(&common)?, &mechanism, dims.as_deref()),
        Command::Bench { common, workers } => {
            let mut cfg = resolve(&common)?;
            if let Some(w) = workers {
                cfg.search.workers = w;
            }
            commands::bench(&cfg, common.force)
        }
    }
}
