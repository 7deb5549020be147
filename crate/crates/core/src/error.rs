use std::path::PathBuf;

use thiserror::Error;

use crate::model::{ContextId, TargetId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{space} index {index} out of range (cardinality {len})")]
    IndexOutOfRange {
        space: &'static str,
        index: usize,
        len: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// Context `i` has zero probability mass under the ground truth.
    #[error("context {0} has zero marginal probability")]
    ZeroMarginal(ContextId),

    #[error("parse error in {section}{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse {
        section: String,
        line: Option<usize>,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical abort at step {step}, pair ({context}, {target}): {detail}")]
    Numerical {
        step: usize,
        context: ContextId,
        target: TargetId,
        detail: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(section: impl Into<String>, line: Option<usize>, message: impl Into<String>) -> Self {
        Error::Parse {
            section: section.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 1 for usage/config problems, 2 for bad or missing data, 3 for a
    /// numerical abort during training.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::IndexOutOfRange { .. } => 1,
            Error::Numerical { .. } => 3,
            _ => 2,
        }
    }
}
