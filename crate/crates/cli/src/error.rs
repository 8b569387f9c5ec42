use thiserror::Error;

use nids_core::anomaly::AnomalyError;
use nids_core::dataset::DatasetError;
use nids_core::fusion::FusionError;
use nids_core::lm::LmError;
use nids_core::metrics::MetricsError;
use nids_core::pipeline::PipelineError;
use nids_core::signature::SignatureError;

/// Every failure maps to one of three stable exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or configuration: exit 1.
    #[error("configuration error: {0}")]
    Config(String),
    /// Unreadable or invalid input data, or a failed computation on it: exit 2.
    #[error("data error: {0}")]
    Data(String),
    /// Persisted artifacts disagree with each other: exit 3.
    #[error("state mismatch: {0}")]
    State(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::State(_) => 3,
        }
    }

    pub fn data(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{context}: {err}"))
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(DatasetError, AnomalyError, FusionError, LmError, MetricsError, PipelineError);

impl From<SignatureError> for CliError {
    fn from(e: SignatureError) -> Self {
        CliError::Config(format!("rule file: {e}"))
    }
}
