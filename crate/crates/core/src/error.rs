use thiserror::Error;

/// Errors raised by model construction, classification and fitting.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("duration {t} ms outside the sub-bin range [0, {t_sub}]")]
    DurationOutOfRange { t: f64, t_sub: f64 },

    #[error("bright fluorescence rate is zero; state changes are unobservable")]
    DegenerateModel,

    #[error("observation table truncation mass {mass:.3e} exceeds tolerance {tol:.3e}; need n_max >= {required}")]
    TableTooSmall {
        mass: f64,
        tol: f64,
        required: usize,
    },

    #[error("empty count sequence")]
    EmptySequence,

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("measurement time {t_b} ms is not a whole number of {t_sub} ms sub-bins")]
    NonIntegralBins { t_b: f64, t_sub: f64 },

    /// `best` holds the best iterate `(a, b, c, tau)`.
    #[error("fit did not converge after {evaluations} evaluations (best residual {residual:.3e})")]
    NoConvergence {
        evaluations: usize,
        residual: f64,
        best: [f64; 4],
    },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("unsupported document version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("data error at line {line}: {reason}")]
    Data { line: usize, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Data {
            line: e.line(),
            reason: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
