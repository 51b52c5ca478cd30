use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate element {element}: {reason}")]
    DegenerateElement { element: usize, reason: String },

    #[error("diffusion tensor is not symmetric positive definite on element {element} at ({x}, {y})")]
    NotSpd { element: usize, x: f64, y: f64 },

    #[error("non-finite nonlinearity on element {element} at u = {state}")]
    NonFinite { element: usize, state: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("linear solver failed at Newton iteration {iteration}: {source}")]
    NewtonSolve {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
