//! Error type shared by every solver layer.

use thiserror::Error;

use crate::polyproj::InfeasibilityCertificate;

pub type Result<T> = std::result::Result<T, NpasaError>;

#[derive(Debug, Error)]
pub enum NpasaError {
    #[error("non-finite {what} value at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("structural error: {0}")]
    Structure(String),

    #[error("invalid polyhedron: {0}")]
    InvalidPolyhedron(String),

    #[error("polyhedron is empty{}", .0.as_ref().map(|c| format!(" (certificate gap {:.3e})", c.gap)).unwrap_or_default())]
    Infeasible(Option<InfeasibilityCertificate>),

    #[error("multiplier reconstruction failed: residual {residual:.3e} on condition {condition}")]
    Reconstruction { condition: &'static str, residual: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("line search stalled after {0} reductions")]
    LineSearchStall(usize),

    #[error("iteration limit reached in {0}")]
    IterationLimit(&'static str),

    #[error("oracle size limit exceeded: {0}")]
    OracleLimit(String),

    #[error("unknown problem '{0}'")]
    UnknownProblem(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
