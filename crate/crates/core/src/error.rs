use thiserror::Error;

/// Errors raised across the workbench.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A linear solve hit a (numerically) zero pivot.
    #[error("singular linear system: {0}")]
    Singular(String),
    /// An iterative method ran out of iterations before meeting its tolerance.
    #[error("{method} did not converge after {iterations} iterations (last relative residual {residual:.3e})")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    /// Parse failure for one of the text formats.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
