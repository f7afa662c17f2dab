use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by every layer of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarBackward(Vec<usize>),

    #[error("non-finite gradient in parameter group `{group}`")]
    NonFiniteGradient { group: String },

    #[error("coordinate out of domain: {0}")]
    Domain(String),

    #[error("query outside raster extent: {0}")]
    Extent(String),

    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("non-finite value in column `{column}` (line {line})")]
    NonFiniteValue { column: String, line: usize },

    #[error("non-finite target at sample index {0}")]
    NonFiniteTarget(usize),

    #[error("zero-variance column `{0}` cannot be normalized")]
    ZeroVariance(String),

    #[error("{op} is not supported in regime {regime}")]
    UnsupportedRegime { op: &'static str, regime: String },

    #[error("no location encoder")]
    NoLocationEncoder,

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::UnsupportedRegime { .. } | Error::NoLocationEncoder => 2,
            Error::NonFiniteGradient { .. } | Error::Invariant(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
