use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] fracop_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("truncated file: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("sample {0} became non-finite")]
    BlowUp(usize),
    #[error("linear solve for sample {sample} left residual {residual:e}")]
    SolverDivergence { sample: usize, residual: f64 },
    #[error("{0}")]
    Usage(String),
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    /// Process exit status: 2 usage, 3 IO or file format, 4 numeric failure,
    /// 5 incompatible inputs.
    pub fn exit_code(&self) -> i32 {
        use fracop_core::Error as C;
        match self {
            Error::Usage(_) => 2,
            Error::Core(C::Config(_) | C::UnknownVariant(_)) => 2,
            Error::Io { .. } | Error::Format(_) | Error::TruncatedFile { .. } => 3,
            Error::BlowUp(_) | Error::SolverDivergence { .. } => 4,
            Error::Core(
                C::NonFiniteLoss { .. }
                | C::DegenerateEigenspace { .. }
                | C::SingularOrder(_)
                | C::NonRealLoss(_)
                | C::CycleDetected { .. }
                | C::ZeroTarget(_),
            ) => 4,
            Error::Core(C::ShapeMismatch(_)) | Error::Incompatible(_) => 5,
        }
    }
}
