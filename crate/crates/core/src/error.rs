use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid AR(1) parameters: sigma={sigma}, rho={rho}")]
    InvalidParams { sigma: f64, rho: f64 },

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("cannot normalize by series mean {mean:e} (sample sd {sd:e})")]
    DegenerateNormalization { mean: f64, sd: f64 },

    #[error("ensemble needs at least {needed} models, got {got}")]
    InsufficientEnsemble { needed: usize, got: usize },

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("model `{model}`: {source}")]
    Model {
        model: String,
        #[source]
        source: Box<Error>,
    },

    #[error("time axes differ between `{first}` and `{second}`")]
    AxisMismatch { first: String, second: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NumericalDegeneracy(_)
            | Error::DegenerateSeries(_)
            | Error::DegenerateNormalization { .. } => ErrorKind::Numerical,
            Error::Model { source, .. } => source.kind(),
            _ => ErrorKind::Input,
        }
    }

    pub(crate) fn for_model(self, model: impl Into<String>) -> Self {
        Error::Model {
            model: model.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
