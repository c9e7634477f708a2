use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("point ({x}, {y}) lies outside the triangle 0 <= y <= x <= {length}")]
    Domain { x: f64, y: f64, length: f64 },

    #[error("no convergence after {iterations} iterations: {what}")]
    NoConvergence { what: String, iterations: usize },

    #[error("blow-up at t = {time}: energy {energy:.6e} exceeds {limit:.6e}")]
    Blowup { time: f64, energy: f64, limit: f64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("singular banded system at pivot {0}")]
    Singular(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Precondition(msg()))
    }
}
