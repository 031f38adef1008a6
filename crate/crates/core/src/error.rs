use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty data")]
    EmptyData,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid bandwidth {0}: must be positive and finite")]
    InvalidBandwidth(f64),

    #[error("need at least {required} samples, got {got}")]
    TooFewSamples { required: usize, got: usize },

    #[error("degenerate covariates: zero empirical standard deviation")]
    DegenerateCovariates,

    #[error("empty context window: every smoother weight vanishes at the context; increase the bandwidth")]
    EmptyContextWindow,

    #[error("singular covariate covariance; regularize it with eps * I")]
    SingularCovariance,

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("the {0} distance is not supported here")]
    UnsupportedDistance(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no sign change on bracket [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("objective appears unbounded below")]
    Unbounded,

    #[error("solver did not converge within {iterations} iterations (best value {best_value})")]
    NotConverged {
        iterations: usize,
        best_x: Vec<f64>,
        best_value: f64,
    },

    #[error("dual solver diverged: {0}")]
    DualDivergence(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Name of the module family the error originates from, for diagnostics.
    pub fn module(&self) -> &'static str {
        match self {
            Error::EmptyData | Error::DimensionMismatch { .. } | Error::NonFinite(_) => {
                "model_core"
            }
            Error::InvalidBandwidth(_) | Error::DegenerateCovariates => "smoothers",
            Error::TooFewSamples { .. } => "smoothers",
            Error::EmptyContextWindow | Error::SingularCovariance => "learners",
            Error::InvalidWeights(_) | Error::UnsupportedDistance(_) => "divergences",
            Error::InvalidParameter(_) => "config",
            Error::NoBracket { .. } | Error::Unbounded | Error::NotConverged { .. } => {
                "convex_engine"
            }
            Error::DualDivergence(_) => "robust_prescribe",
            Error::Parse { .. } | Error::Io(_) => "io",
        }
    }

    /// True for failures of a numerical solver (as opposed to bad input).
    pub fn is_solver_error(&self) -> bool {
        matches!(
            self,
            Error::NoBracket { .. }
                | Error::Unbounded
                | Error::NotConverged { .. }
                | Error::DualDivergence(_)
                | Error::EmptyContextWindow
                | Error::SingularCovariance
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
