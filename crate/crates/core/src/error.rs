use thiserror::Error;

/// Errors raised by the numerical routines and the experiment harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("no bracket found for inverse at y = {y}")]
    BracketNotFound { y: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("series did not converge after {terms} terms at z = {z}")]
    SeriesNonConvergence { z: f64, terms: usize },

    #[error("quadrature did not reach tolerance: {0}")]
    Quadrature(String),

    #[error("unsupported argument: {0}")]
    Unsupported(String),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("parameter window violated: {0}")]
    Window(String),

    #[error("infinite total rate: {0}")]
    InfiniteRate(String),

    #[error("atom outside sampling window: {0}")]
    OutsideWindow(String),

    #[error("solvability gate violated: {0}")]
    Gate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("Picard iteration did not converge in {iterations} iterations (last residual {last:.3e})")]
    PicardNonConvergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
