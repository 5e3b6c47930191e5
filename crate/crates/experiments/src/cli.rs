//! Command-line front end.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::run::{run_experiment, RunError};

#[derive(Debug, Parser)]
#[command(
    name = "qinfer",
    version,
    about = "Q-value inference and exploration experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact Q*, V*, chi* and greedy policy of a model.
    Solve(CommonArgs),
    /// Coverage of plug-in intervals under a fixed exploration policy.
    Coverage(CommonArgs),
    /// Correct-selection proportions per agent.
    Select(CommonArgs),
    /// Interval lengths per agent.
    CiLength(CommonArgs),
    /// Q-OCBA runs with selection and interval summaries.
    QocbaRun(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment config (TOML).
    #[arg(short, long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the number of replications.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "QINFER_THREADS", default_value_t = 1)]
    pub threads: usize,
    /// CSV output path; defaults to the config's `output`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

impl Command {
    fn parts(&self) -> (ExperimentKind, &CommonArgs) {
        match self {
            Command::Solve(a) => (ExperimentKind::Solve, a),
            Command::Coverage(a) => (ExperimentKind::Coverage, a),
            Command::Select(a) => (ExperimentKind::CorrectSelection, a),
            Command::CiLength(a) => (ExperimentKind::CiLength, a),
            Command::QocbaRun(a) => (ExperimentKind::QocbaRun, a),
        }
    }
}

/// Process exit codes.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Runs a parsed command line; returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let (kind, args) = cli.command.parts();
    let mut cfg = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if cfg.kind != kind {
        eprintln!(
            "error: config kind `{}` does not match subcommand `{}`",
            cfg.kind.name(),
            kind.name()
        );
        return EXIT_CONFIG;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(reps) = args.reps {
        cfg.replications = reps;
    }
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.max(1))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return EXIT_RUNTIME;
        }
    };
    let table = match pool.install(|| run_experiment(&cfg)) {
        Ok(t) => t,
        Err(RunError::Config(e)) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    print!("{}", table.summary());
    let out = args
        .output
        .clone()
        .or_else(|| cfg.output.as_ref().map(|p| cfg.resolve(p)));
    if let Some(path) = out {
        let written = std::fs::File::create(&path)
            .map_err(|e| e.to_string())
            .and_then(|f| {
                table
                    .write_csv(std::io::BufWriter::new(f))
                    .map_err(|e| e.to_string())
            });
        if let Err(e) = written {
            eprintln!("error: cannot write {}: {e}", path.display());
            return EXIT_RUNTIME;
        }
    }
    0
}
