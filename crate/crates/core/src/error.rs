use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty input: no edges found")]
    EmptyInput,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("graph is disconnected ({0} components)")]
    Disconnected(usize),

    #[error("node {0} is isolated (degree 0)")]
    IsolatedNode(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("insufficient non-edges: requested {requested}, available {available}")]
    InsufficientNonEdges { requested: usize, available: usize },

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that originate in the optimisation or linear algebra
    /// rather than in user input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
