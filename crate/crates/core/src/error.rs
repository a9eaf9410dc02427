use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {max_asym:e})")]
    NotSymmetric { max_asym: f64 },

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },

    #[error("matrix is not positive definite (min eigenvalue {min_eig:e})")]
    NotPd { min_eig: f64 },

    #[error("matrix is rank deficient (min eigenvalue of XᵀX is {min_eig:e})")]
    RankDeficient { min_eig: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("tape mismatch: {0}")]
    TapeMismatch(String),

    #[error("invalid supply preset: {0}")]
    InvalidPreset(String),

    #[error("state became non-finite or exceeded the divergence bound at step {step}")]
    NonFiniteState { step: usize },

    #[error("reconstruction network is missing")]
    MissingEta,

    #[error("trajectory does not carry states")]
    MissingStates,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: row {row}: {msg}", path.display())]
    Format {
        path: PathBuf,
        row: usize,
        msg: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::dims(context, expected, found))
    }
}
