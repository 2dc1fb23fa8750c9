use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Domain(String),
    #[error("invalid instrument: {0}")]
    InvalidInstrument(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;
