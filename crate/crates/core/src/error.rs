use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the numerical kernels and pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("series did not converge within {terms} terms (remaining mass {remaining:e})")]
    Convergence { terms: usize, remaining: f64 },

    #[error("frequency {freq_hz:e} Hz outside tabulated span [{lo_hz:e}, {hi_hz:e}] Hz")]
    OutOfRange { freq_hz: f64, lo_hz: f64, hi_hz: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("sample period mismatch: {0:e} s vs {1:e} s")]
    SamplePeriodMismatch(f64, f64),

    #[error("carrier {carrier_hz:e} Hz aliases at sample rate (Nyquist {nyquist_hz:e} Hz)")]
    Aliasing { carrier_hz: f64, nyquist_hz: f64 },

    #[error("rank condition violated: training span {span} < 2L = {required}")]
    RankCondition { span: usize, required: usize },

    #[error("convolution matrix is rank deficient")]
    RankDeficient,

    #[error("convolution matrix condition number {cond:e} exceeds cap {cap:e}")]
    IllConditioned { cond: f64, cap: f64 },

    #[error("channel estimate has a spectral null at bin {bin}")]
    SpectralNull { bin: usize },

    #[error("error curves do not cross on [{lo}, {hi}]")]
    NoCrossing { lo: f64, hi: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance is not symmetric positive definite")]
    SingularCovariance,

    #[error("non-finite value in input data")]
    NonFinite,

    #[error("not a stochastic matrix: {0}")]
    NotStochastic(String),

    #[error("unknown modulation scheme `{0}`")]
    UnknownScheme(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of a numerical procedure (as opposed to bad input).
    pub fn is_numeric_failure(&self) -> bool {
        matches!(
            self,
            Error::Convergence { .. }
                | Error::RankDeficient
                | Error::IllConditioned { .. }
                | Error::SpectralNull { .. }
                | Error::NoCrossing { .. }
                | Error::SingularCovariance
        )
    }
}
