use std::path::PathBuf;

use thiserror::Error;

use crate::sigdata::ChannelKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments, configuration or specs.
    Config,
    /// Input data is missing, malformed or inconsistent.
    Data,
    /// Failure while computing (I/O, numerical breakdown).
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing channel {kind} ({context})")]
    MissingChannel { kind: ChannelKind, context: String },

    #[error("epoch {epoch} is excluded from scoring")]
    ExcludedEpoch { epoch: usize },

    #[error("index {index} out of range (len {len})")]
    BadIndex { index: usize, len: usize },

    #[error("duplicate patient id `{0}`")]
    DuplicatePatient(String),

    #[error("invalid synthesis spec: {0}")]
    BadSpec(String),

    #[error("{}: field `{field}`: {detail}", file.display())]
    Format {
        file: PathBuf,
        field: String,
        detail: String,
    },

    #[error("{}: {detail}", file.display())]
    Integrity { file: PathBuf, detail: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("bad argument: {0}")]
    BadArg(String),

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("gradient tape already consumed")]
    TapeConsumed,

    #[error("no data: {0}")]
    NoData(String),

    #[error("non-finite gradient at {path}")]
    NonFiniteGradient { path: String },

    #[error("kappa undefined: chance agreement is 1 (observed agreement {observed_agreement})")]
    Degenerate { observed_agreement: f64 },

    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::DuplicatePatient(_) | Error::BadSpec(_) | Error::BadArg(_) | Error::Config(_) | Error::Shape(_) => {
                ErrorKind::Config
            }
            Error::MissingChannel { .. }
            | Error::ExcludedEpoch { .. }
            | Error::BadIndex { .. }
            | Error::Format { .. }
            | Error::Integrity { .. }
            | Error::NoData(_) => ErrorKind::Data,
            Error::TapeConsumed | Error::NonFiniteGradient { .. } | Error::Degenerate { .. } | Error::Io { .. } => {
                ErrorKind::Runtime
            }
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(file: impl Into<PathBuf>, field: impl Into<String>, detail: impl ToString) -> Self {
        Error::Format {
            file: file.into(),
            field: field.into(),
            detail: detail.to_string(),
        }
    }
}
