use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid system dimensions: {0}")]
    InvalidDims(String),
    #[error("expected {expected} bits, got {got}")]
    BitLength { expected: usize, got: usize },
    #[error("unsupported QAM order {0} (expected 4, 16 or 64)")]
    UnsupportedOrder(u32),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("degenerate channel: reciprocal condition estimate {rcond:e} is below {threshold:e}")]
    DegenerateChannel { rcond: f64, threshold: f64 },
    #[error("normalization factor {alpha} is outside the convergence range (0, {bound})")]
    AlphaOutOfRange { alpha: f64, bound: f64 },
    #[error("TPE order must be at least 1")]
    ZeroOrder,
    #[error("TPE order {0} exceeds the supported maximum of {max}", max = crate::detect::MAX_ORDER)]
    OrderTooLarge(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("ill-posed fit: reciprocal condition {rcond:e} of the normal equations; try a smaller J")]
    IllPosedFit { rcond: f64 },
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown detector kind `{0}`")]
    UnknownDetector(String),
}
