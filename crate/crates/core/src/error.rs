use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(&'static str),
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    #[error("image {width}x{height} is smaller than the required {min}x{min}")]
    TooSmall { width: usize, height: usize, min: usize },
    #[error("invalid kernel: {0}")]
    InvalidKernel(&'static str),
    #[error("unsupported Schatten order {0}")]
    UnsupportedOrder(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("non-finite value encountered at iteration {iteration}")]
    NonFinite { iteration: usize },
}
