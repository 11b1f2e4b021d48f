use thiserror::Error;

/// Errors raised by the sensing analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix entry is not finite")]
    NonFinite,

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("trace is not 1 (got {0})")]
    InvalidTrace(f64),

    #[error("not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("POVM elements do not sum to identity (max deviation {0:e})")]
    IncompletePovm(f64),

    #[error("Kraus operators are not trace preserving (max deviation {0:e})")]
    NotTracePreserving(f64),

    #[error("outcome probabilities sum to {0}, not 1")]
    ProbabilityNormalization(f64),

    #[error("vector is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular expression {what}: denominator {denominator:e}")]
    Singular { what: &'static str, denominator: f64 },

    #[error("conditional state undefined: postselection probability {0:e}")]
    UndefinedConditionalState(f64),

    #[error("degenerate limit point for {what}: denominator {denominator:e}")]
    Degenerate { what: &'static str, denominator: f64 },

    #[error("noise model violates positivity at t = {t}: xi^2 = {xi_sq} > R(2-R) = {bound}")]
    ModelPositivity { t: f64, xi_sq: f64, bound: f64 },

    #[error("Fisher information is zero; Cramer-Rao bound undefined")]
    ZeroInformation,

    #[error("invalid sweep grid: {0}")]
    Grid(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            Error::Io(e.to_string())
        } else {
            Error::Parse(e.to_string())
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
