use crate::checkpoint::CheckpointError;
use crate::config::ConfigError;
use crate::manifest::ManifestError;
use crate::noise::PoolError;
use crate::report::ReportError;
use crate::wav::WavError;
use thiserror::Error;
use wuwse_core::augment::AugmentError;
use wuwse_core::eval::MetricError;
use wuwse_core::tensor::TensorError;
use wuwse_core::train::TrainError;

/// Command failure, classified for the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
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

data_error!(ManifestError, WavError, PoolError, ReportError);

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Train(t) => t.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<AugmentError> for CliError {
    fn from(e: AugmentError) -> Self {
        match e {
            AugmentError::EmptyPool | AugmentError::SnrRange(..) => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Buckets(..) => CliError::Config(e.to_string()),
            MetricError::NonFinite(_) => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::Capability(_) => CliError::Config(e.to_string()),
            TrainError::Numeric { .. } => CliError::Numeric(e.to_string()),
            TrainError::Tensor(t) => t.into(),
            TrainError::Augment(a) => a.into(),
            TrainError::Metric(m) => m.into(),
            TrainError::Audio(a) => CliError::Data(a.to_string()),
        }
    }
}
