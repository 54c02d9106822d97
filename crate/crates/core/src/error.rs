use thiserror::Error;

/// Errors raised by network construction and data generation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },
    #[error("connectivity: graph with {n_nodes} nodes is not connected after {attempts} attempts")]
    Connectivity { n_nodes: usize, attempts: usize },
    #[error("malformed topology: {0}")]
    Topology(String),
    #[error("degenerate pilot: node {node} has no nonzero pilot measurement")]
    DegeneratePilot { node: usize },
}

impl ModelError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        ModelError::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}

/// Divergence guard failures during an adaptive run.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DivergenceError {
    #[error("non-finite value at iteration {iteration}, node {node}")]
    NonFinite { iteration: usize, node: usize },
    #[error("estimate norm {norm:.3e} exceeds limit at iteration {iteration}, node {node}")]
    NormExceeded {
        iteration: usize,
        node: usize,
        norm: f64,
    },
}

impl DivergenceError {
    pub fn iteration(&self) -> usize {
        match self {
            DivergenceError::NonFinite { iteration, .. }
            | DivergenceError::NormExceeded { iteration, .. } => *iteration,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("eigenvalue iteration did not converge after {0} sweeps")]
    NoConvergence(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrbError {
    #[error(
        "non-identifiable parameterization: condition number {condition:.3e}, null direction {null_direction:?}"
    )]
    NonIdentifiable {
        condition: f64,
        null_direction: Vec<f64>,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Failure of a complete adaptive run.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
