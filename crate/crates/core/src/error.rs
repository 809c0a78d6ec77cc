use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("density {density} trees/m² cannot be placed in {area:.1} m² with the required separation")]
    InfeasibleDensity { density: f64, area: f64 },

    #[error("patch grid {patch_size}px does not fit a {width}x{height} frame")]
    GridMismatch {
        patch_size: usize,
        width: usize,
        height: usize,
    },

    #[error("feature layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("normal equations are singular even after regularisation (lambda = {lambda})")]
    Singular { lambda: f64 },

    #[error("empty dataset: {0}")]
    EmptyData(&'static str),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}
