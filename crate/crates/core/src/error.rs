use thiserror::Error;

/// Errors raised across the solver and reduced-order modelling stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh request: {0}")]
    Mesh(String),

    #[error("point ({x}, {y}) lies outside the domain")]
    OutsideDomain { x: f64, y: f64 },

    #[error("inadmissible state in element {element}, node {node}: {reason}")]
    State {
        element: usize,
        node: usize,
        reason: String,
    },

    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("container parse error at byte {offset}: {message}")]
    Container { offset: usize, message: String },

    #[error("mesh fingerprint mismatch: file has {found}, expected {expected}")]
    Fingerprint { found: String, expected: String },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Training { epoch: usize },

    #[error("{0}")]
    Pipeline(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
