use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Cholesky factorization of a precision matrix failed even after jitter.
    #[error("precision matrix is not positive definite: pivot {index} = {value:e}")]
    Degenerate { index: usize, value: f64 },

    #[error("topology is not connected ({reachable} of {agents} agents reachable from agent 0)")]
    Disconnected { reachable: usize, agents: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error("epoch {epoch}, agent {agent}: {source}")]
    Epoch {
        epoch: i64,
        agent: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn at(self, epoch: i64, agent: usize) -> Self {
        match self {
            e @ Error::Epoch { .. } => e,
            e => Error::Epoch {
                epoch,
                agent,
                source: Box::new(e),
            },
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}
