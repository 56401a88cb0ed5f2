use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the link models, the configuration loader and the emitters.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A quadrature or iterative routine failed to reach its tolerance.
    #[error("numeric failure: {what} (residual estimate {residual:e})")]
    Numeric { what: String, residual: f64 },

    /// QBER requested for a link that generates no raw key.
    #[error("undefined rate: no raw key is generated (P(n_eff = 1) = 0)")]
    UndefinedRate,

    /// Malformed configuration text.
    #[error("config parse error at line {line}, key `{key}`: {message}")]
    Parse {
        line: usize,
        key: String,
        message: String,
    },

    /// A parameter outside its accepted physical range.
    #[error("`{key}` = {value:e} outside allowed interval [{min:e}, {max:e}]")]
    Range {
        key: String,
        value: f64,
        min: f64,
        max: f64,
    },

    /// A sweep coordinate could not be evaluated.
    #[error("sweep point {axis} = {value:e}: {source}")]
    SweepPoint {
        axis: String,
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by a user-supplied value rather than a numeric breakdown.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Domain(_) | Error::Parse { .. } | Error::Range { .. } => true,
            Error::SweepPoint { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
