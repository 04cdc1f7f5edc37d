use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite entry in {what} at ({row}, {col})")]
    NonFinite {
        what: &'static str,
        row: usize,
        col: usize,
    },

    #[error("dimension mismatch in {what}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    /// The Krylov solver stopped at its iteration cap above tolerance.
    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("solve for incident direction {index} failed: {source}")]
    Direction {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("outer iteration {iteration} failed: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("iterate diverged at iteration {iteration} (max modulus {max_modulus:.3e}); stepsize too large?")]
    Diverged { iteration: usize, max_modulus: f64 },

    #[error("series truncation too small: tail estimate {tail:.3e}")]
    SeriesTruncation { tail: f64 },

    #[error("network weights: {0}")]
    Weights(String),

    #[error("scene sampling exhausted {0} rejections")]
    SamplingExhausted(usize),

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn in_direction(self, index: usize) -> Self {
        Error::Direction {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::Iteration {
            iteration,
            source: Box::new(self),
        }
    }

    /// True when the root cause is numerical (non-convergence, divergence)
    /// rather than bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotConverged { .. } | Error::Diverged { .. } | Error::SeriesTruncation { .. } => {
                true
            }
            Error::Direction { source, .. }
            | Error::Iteration { source, .. }
            | Error::Sample { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) | Error::Format(_) | Error::Json(_) => true,
            Error::Sample { source, .. } => source.is_io(),
            _ => false,
        }
    }
}
