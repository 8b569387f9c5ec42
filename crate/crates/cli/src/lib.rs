//! Command-line front end: one TOML configuration drives
//! preprocess, train, tune, detect, evaluate and bench.

pub mod commands;
pub mod config;
pub mod error;
pub mod state;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nids_core::dataset::SynthConfig;

pub use commands::{Overrides, Run};
pub use config::RunConfig;
pub use error::CliError;
pub use state::State;

#[derive(Debug, Parser)]
#[command(name = "nids", version, about = "Hybrid signature / anomaly / language-model intrusion detector")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `dataset.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Input CSV (defaults to the dataset for preprocess, the test split otherwise).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Overrides `paths.out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split the dataset and fit preprocessing state.
    Preprocess(Common),
    /// Train the language model and fit the anomaly profile.
    Train(Common),
    /// Tune the LM threshold on the validation split.
    Tune(Common),
    /// Write one JSON verdict per input flow.
    Detect(Common),
    /// Per-detector metrics and ROC data on a labeled set.
    Evaluate(Common),
    /// Per-sample detection latency.
    Bench(Common),
    /// Generate a synthetic labeled dataset and matching rule file.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        benign: usize,
        #[arg(long = "family-s", default_value_t = 200)]
        family_s: usize,
        #[arg(long = "family-a", default_value_t = 200)]
        family_a: usize,
        #[arg(long = "family-l", default_value_t = 200)]
        family_l: usize,
    },
}

fn with_run(c: &Common, f: fn(&Run) -> Result<String, CliError>) -> Result<String, CliError> {
    let run = Run::load(&c.config, Overrides { seed: c.seed, input: c.input.clone(), out: c.out.clone() })?;
    f(&run)
}

/// Execute a parsed command; the string is the summary line.
pub fn execute(command: &Command) -> Result<String, CliError> {
    match command {
        Command::Preprocess(c) => with_run(c, commands::preprocess),
        Command::Train(c) => with_run(c, commands::train_cmd),
        Command::Tune(c) => with_run(c, commands::tune_cmd),
        Command::Detect(c) => with_run(c, commands::detect),
        Command::Evaluate(c) => with_run(c, commands::evaluate_cmd),
        Command::Bench(c) => with_run(c, commands::bench_cmd),
        Command::Synth { out, seed, benign, family_s, family_a, family_l } => {
            commands::synth(Path::new(out), SynthConfig::new(*benign, *family_s, *family_a, *family_l), *seed)
        }
    }
}
