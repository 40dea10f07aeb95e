use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("resource limit: {what} requires {required_bytes} bytes (budget {budget_bytes}); {hint}")]
    Resource {
        what: String,
        required_bytes: u64,
        budget_bytes: u64,
        hint: String,
    },

    #[error("no finite inverse temperature: target energy {target} is at or outside the {edge} spectrum edge {edge_value}")]
    NoFiniteBeta {
        target: f64,
        edge: &'static str,
        edge_value: f64,
    },

    #[error("propagator did not converge: residual {residual} after {substeps} substeps (tolerance {tolerance})")]
    Convergence {
        residual: f64,
        substeps: usize,
        tolerance: f64,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
