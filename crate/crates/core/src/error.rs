use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is disconnected (algebraic connectivity {mu2:e})")]
    Disconnected { mu2: f64 },

    #[error("matrix is not symmetric diagonally dominant at row {row}: {reason}")]
    NotSdd { row: usize, reason: &'static str },

    #[error("singular splitting: zero diagonal entry at row {0}")]
    SingularSplitting(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("inner solver did not converge at node {node} after {iterations} iterations")]
    InnerSolver { node: usize, iterations: usize },

    #[error("local Hessian at node {0} is singular")]
    SingularHessian(usize),

    #[error("SDD solve for coordinate {coordinate} failed: {source}")]
    Coordinate {
        coordinate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("locality violation: node {reader} read state owned by non-neighbor {owner}")]
    Locality { reader: usize, owner: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
