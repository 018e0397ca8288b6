use hivesig::audio_io::AudioError;
use hivesig::compress::CompressError;
use hivesig::evalmetrics::MetricsError;
use hivesig::network::{CheckpointError, NetworkError};
use hivesig::tfrepr::TfError;

/// Exit-code contract: 2 usage/input, 3 data/shape, 4 pipeline order.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Data(String),
    #[error("pipeline order: {0}")]
    Order(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot read checkpoint {path}: {source}")]
    Checkpoint { path: String, source: CheckpointError },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Tf(#[from] TfError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Compress(#[from] CompressError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input(_) | CliError::Io { .. } | CliError::Checkpoint { .. } => 2,
            CliError::Audio(_) => 2,
            CliError::Metrics(MetricsError::InvalidRuns(_)) => 2,
            CliError::Order(_) => 4,
            CliError::Data(_)
            | CliError::Tf(_)
            | CliError::Network(_)
            | CliError::Compress(_)
            | CliError::Metrics(_) => 3,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }
}

pub type CliResult<T> = Result<T, CliError>;
