use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid pulse sequence: {0}")]
    InvalidSequence(String),

    #[error("region [{start}, {end}) is not labeled {expected}")]
    RegimeMismatch {
        start: f64,
        end: f64,
        expected: &'static str,
    },

    #[error("window too short: {0}")]
    WindowTooShort(String),

    #[error("grid exceeds cap: {0}")]
    CapExceeded(String),

    #[error("symplectic residual {residual:.3e} exceeds bound {bound:.3e}")]
    NotSymplectic { residual: f64, bound: f64 },

    #[error("degenerate state: {0}")]
    Degenerate(String),

    #[error("closed form diverges at alpha_l = {0}")]
    Divergent(f64),

    #[error("step condition violated: dt = {dt:.3e} > {limit:.3e}")]
    StepCondition { dt: f64, limit: f64 },

    #[error("non-finite value in integrator at step {step}, t = {time:.6}")]
    NonFinite { step: usize, time: f64 },

    #[error("transverse grid not closed under k -> 2k_pi - k ({0} unmatched modes)")]
    NotClosed(usize),

    #[error("no root in bracket [{0}, {1}]")]
    NoRoot(f64, f64),

    #[error("map container: {0}")]
    Container(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable code used in CLI error reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::InvalidGrid(_) => "invalid-grid",
            Error::InvalidSequence(_) => "invalid-sequence",
            Error::RegimeMismatch { .. } => "regime-mismatch",
            Error::WindowTooShort(_) => "window-too-short",
            Error::CapExceeded(_) => "cap-exceeded",
            Error::NotSymplectic { .. } => "not-symplectic",
            Error::Degenerate(_) => "degenerate-state",
            Error::Divergent(_) => "divergent",
            Error::StepCondition { .. } => "step-condition",
            Error::NonFinite { .. } => "non-finite",
            Error::NotClosed(_) => "grid-not-closed",
            Error::NoRoot(..) => "no-root",
            Error::Container(_) => "container",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
