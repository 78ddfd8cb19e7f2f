use thiserror::Error;

pub type Result<T> = std::result::Result<T, SdbeError>;

/// Failures raised by the container readers and writers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("file ends inside the header")]
    TruncatedHeader,
    #[error("file ends inside the data block")]
    TruncatedPayload,
    #[error("{0} unexpected bytes after the last block")]
    TrailingBytes(usize),
    #[error("label count mismatch: expected {expected}, found {found}")]
    LabelCountMismatch { expected: usize, found: usize },
    #[error("payload contains a non-finite value")]
    NonFinitePayload,
    #[error("unknown model mode byte {0}")]
    UnknownMode(u8),
    #[error("inconsistent model payload: {0}")]
    InconsistentPayload(String),
}

impl FormatError {
    pub fn category(&self) -> &'static str {
        match self {
            FormatError::BadMagic => "bad-magic",
            FormatError::TruncatedHeader => "truncated-header",
            FormatError::TruncatedPayload => "truncated-payload",
            FormatError::TrailingBytes(_) => "trailing-bytes",
            FormatError::LabelCountMismatch { .. } => "label-count-mismatch",
            FormatError::NonFinitePayload => "non-finite-payload",
            FormatError::UnknownMode(_) => "unknown-mode",
            FormatError::InconsistentPayload(_) => "inconsistent-payload",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdbeError {
    #[error("vector norm is zero (or underflows)")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("label sequences differ at position {0}")]
    LabelMismatch(usize),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error(
        "solver did not converge after {iterations} iterations (kkt residual {kkt_residual:e})"
    )]
    NotConverged {
        iterations: usize,
        kkt_residual: f64,
    },
    #[error("operation requires an L2 model")]
    WrongMode,
    #[error("vector is constant (zero centered norm)")]
    ConstantVector,
    #[error("training data must contain at least two classes")]
    DegenerateLabels,
    #[error("infeasible world spec: {0}")]
    InfeasibleSpec(String),
    #[error("format error: {0}")]
    Format(#[from] FormatError),
}

impl SdbeError {
    /// Short machine-readable tag used by the command line front end.
    pub fn category(&self) -> &'static str {
        match self {
            SdbeError::ZeroVector => "zero-vector",
            SdbeError::DimensionMismatch { .. } => "dimension-mismatch",
            SdbeError::EmptyInput => "empty-input",
            SdbeError::LabelMismatch(_) => "label-mismatch",
            SdbeError::NonFinite => "non-finite",
            SdbeError::InvalidArgument(_) => "invalid-argument",
            SdbeError::NumericalFailure(_) => "numerical-failure",
            SdbeError::NotConverged { .. } => "not-converged",
            SdbeError::WrongMode => "wrong-mode",
            SdbeError::ConstantVector => "constant-vector",
            SdbeError::DegenerateLabels => "degenerate-labels",
            SdbeError::InfeasibleSpec(_) => "infeasible-spec",
            SdbeError::Format(f) => f.category(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(SdbeError::DimensionMismatch { expected, found })
    }
}
