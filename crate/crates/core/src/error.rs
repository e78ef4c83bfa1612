use std::path::PathBuf;

use crate::direction::Dir;

/// Errors raised while loading inputs, configuring or running a simulation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(
        "bound violation at t = {t} s in cell ({i}, {j}), {what}: value {value:e} outside [0, {upper:e}]"
    )]
    BoundViolation {
        t: f64,
        i: usize,
        j: usize,
        what: BoundTarget,
        value: f64,
        upper: f64,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Which quantity failed a positivity or boundedness audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundTarget {
    Partial(Dir),
    Sum,
}

impl std::fmt::Display for BoundTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundTarget::Partial(d) => write!(f, "partial density {d}"),
            BoundTarget::Sum => write!(f, "summed density"),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
