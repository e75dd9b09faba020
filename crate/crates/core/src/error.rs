use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("eigenbasis for n={n} failed orthonormality check (max deviation {deviation:e})")]
    DegenerateEigenspace { n: usize, deviation: f64 },
    #[error("fractional order {0} is an even integer; chirp factor undefined")]
    SingularOrder(f64),
    #[error("tape inconsistency: node {node} references input {input}")]
    CycleDetected { node: usize, input: usize },
    #[error("loss has imaginary part {0:e}")]
    NonRealLoss(f64),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown ablation variant `{0}`")]
    UnknownVariant(String),
    #[error("target sample {0} has zero norm")]
    ZeroTarget(usize),
    #[error("non-finite loss at epoch {epoch} (last good epoch: {last_good:?})")]
    NonFiniteLoss {
        epoch: usize,
        last_good: Option<usize>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::Error::ShapeMismatch(alloc::format!($($arg)*))
    };
}
pub(crate) use shape_err;
