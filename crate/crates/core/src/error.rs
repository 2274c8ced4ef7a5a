use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("structure error: {0}")]
    Structure(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("no convergence after {iterations} iterations (last iterate {last})")]
    Convergence { iterations: usize, last: f64 },

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("linear algebra error: {0}")]
    LinearAlgebra(String),

    #[error("numerical failure at iteration {iteration}: {message}")]
    Numerical {
        iteration: usize,
        message: String,
        /// Diagnostics gathered before the failure.
        trace: Vec<crate::vb::TraceRow>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
