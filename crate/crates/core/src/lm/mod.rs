//! Small GPT-style decoder trained from scratch on flow token sequences.
//!
//! The model predicts the next token at every position and, at the trailing
//! class-query position, a benign/threat distribution. Training minimizes
//! `L3 = L2 + λ·L1` where `L1` is the next-token negative log-likelihood
//! and `L2` the class negative log-likelihood.

mod checkpoint;
mod config;
mod model;
mod params;
mod train;

pub use checkpoint::Checkpoint;
pub use config::{LmConfig, Optimizer};
pub use model::{LabeledSequence, LanguageModel, LmOutput, LmVerdict, Losses};
pub use params::{LmParams, ParamLayout, TensorSpec};
pub use train::{train, EpochLog, TrainLog};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LmError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("training aborted at epoch {epoch}, step {step}: {message}")]
    Training { epoch: usize, step: usize, message: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
