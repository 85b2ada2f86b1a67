use std::path::PathBuf;

/// Errors produced anywhere in the solver pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("topology error at {entity} {index}: {message}")]
    Topology {
        entity: &'static str,
        index: usize,
        message: String,
    },

    #[error("geometry error at element {element}: {message}")]
    Geometry { element: usize, message: String },

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("iterative solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("missing capability: {0}")]
    Capability(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
