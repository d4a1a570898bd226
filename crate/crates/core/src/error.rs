use thiserror::Error;

use crate::blend::BlendError;
use crate::cv_stack::StackError;
use crate::features::FeatureError;
use crate::gbdt::GbdtError;
use crate::ingest::IngestError;
use crate::metric::MetricError;
use crate::report::ReportError;
use crate::synth::SynthError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the command line for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Training,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Gbdt(#[from] GbdtError),
    #[error(transparent)]
    Stack(#[from] StackError),
    #[error(transparent)]
    Blend(#[from] BlendError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    /// Two inputs do not cover the same customers.
    #[error("{0}")]
    Alignment(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn format(path: impl AsRef<std::path::Path>, message: impl ToString) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            message: message.to_string(),
        }
    }

    pub(crate) fn stage(stage: impl Into<String>, source: impl Into<Error>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(source.into()),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Synth(_) => ErrorKind::Config,
            Error::Gbdt(e) => match e {
                GbdtError::InvalidConfig(_) => ErrorKind::Config,
                _ => ErrorKind::Training,
            },
            Error::Stack(e) => match e {
                StackError::Fold { .. } => ErrorKind::Training,
                _ => ErrorKind::Data,
            },
            Error::Blend(BlendError::InvalidWeights(_)) => ErrorKind::Config,
            Error::Features(FeatureError::EmptySpec | FeatureError::InvalidSpec(_)) => {
                ErrorKind::Config
            }
            Error::Ingest(IngestError::Schema(_) | IngestError::NonPositivePrecision(_)) => {
                ErrorKind::Config
            }
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }
}
