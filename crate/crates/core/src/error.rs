use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the niche pipeline.
///
/// Variants are grouped by the exit class the command line maps them to:
/// parameter/config problems, data problems, and numeric failures.
#[derive(Debug, Error)]
pub enum NicheError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("config validation failed: {0}")]
    Config(String),

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("rank-deficient design: collinear columns {columns:?}")]
    RankDeficient { columns: Vec<String> },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("missing artifact {path}: run `{command}` first")]
    MissingArtifact { path: PathBuf, command: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Process exit classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    Validation = 2,
    Data = 3,
    Numeric = 4,
}

impl NicheError {
    pub fn exit_class(&self) -> ExitClass {
        match self {
            NicheError::Parameter(_) | NicheError::Config(_) => ExitClass::Validation,
            NicheError::Parse { .. }
            | NicheError::Data(_)
            | NicheError::MissingArtifact { .. }
            | NicheError::Io { .. } => ExitClass::Data,
            NicheError::Domain(_) | NicheError::RankDeficient { .. } | NicheError::Numeric(_) => {
                ExitClass::Numeric
            }
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NicheError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, NicheError>;
