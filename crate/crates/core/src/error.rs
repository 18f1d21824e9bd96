use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad class of a failure, used to map errors onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Shape,
    Numeric,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Io => 2,
            ErrorClass::Shape => 3,
            ErrorClass::Numeric => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty tensor")]
    EmptyTensor,
    #[error("data length {len} does not match dims {dims:?}")]
    LengthMismatch { dims: Vec<usize>, len: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in tensor")]
    NonFinite,
    #[error("kernel size must be odd (got {0})")]
    EvenKernel(usize),
    #[error("kernel size {k} exceeds spatial size {n}")]
    KernelTooLarge { k: usize, n: usize },
    #[error("non-invertible convolution at frequency {index}")]
    Singular { index: usize },
    #[error("degenerate weight norm")]
    DegenerateNorm,
    #[error("spectral norm {0:e} too small to normalize")]
    DegenerateSigma(f64),
    #[error("Björck iteration diverged after {0} iterations")]
    Divergence(usize),
    #[error("oracle size limit: {size} exceeds {limit}")]
    OracleLimit { size: usize, limit: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad magic")]
    BadMagic,
    #[error("unsupported dtype tag {0}")]
    BadDtype(u8),
    #[error("rank {0} outside 1..=4")]
    BadRank(u8),
    #[error("truncated payload: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("expected a {expected} tensor, found {found}")]
    WrongKind {
        expected: &'static str,
        found: &'static str,
    },
    #[error("network description: {0}")]
    Network(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            BadMagic | BadDtype(_) | BadRank(_) | Truncated { .. } | TrailingBytes(_) | Json(_)
            | Io(_) => ErrorClass::Io,
            EmptyTensor
            | LengthMismatch { .. }
            | Shape(_)
            | EvenKernel(_)
            | KernelTooLarge { .. }
            | OracleLimit { .. }
            | WrongKind { .. }
            | InvalidArgument(_)
            | Network(_) => ErrorClass::Shape,
            NonFinite | Singular { .. } | DegenerateNorm | DegenerateSigma(_) | Divergence(_) => {
                ErrorClass::Numeric
            }
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
