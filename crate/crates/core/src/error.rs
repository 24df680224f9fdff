use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid link universe: {0}")]
    InvalidLinks(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("topology {topology} is infeasible: {reason}")]
    Infeasible { topology: usize, reason: String },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error(
        "coupling has {active} active channels, exceeding the vertex budget of 2^{budget_log2}; \
         use coarser bounds or merge coalitions"
    )]
    VertexBudget { active: usize, budget_log2: u32 },

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("numerical failure at step {step}: {message}")]
    Numerical { step: usize, message: String },

    #[error("gain store: {0}")]
    Store(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("plot: {0}")]
    Plot(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
