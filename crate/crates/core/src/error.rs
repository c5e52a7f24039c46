use thiserror::Error;

/// Errors produced by graph construction, decomposition, simulation and analysis.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is not connected")]
    Disconnected,

    #[error("invalid coupling matrix: {0}")]
    InvalidCoupling(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix {name} is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { name: &'static str, min_eigenvalue: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("step size underflow at t = {t} (h = {h:e}); the system is too stiff for the step cap")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("solution escapes to infinity near t = {t}")]
    FiniteEscape { t: f64 },

    #[error("certificate refused: Jacobian is not Hurwitz (spectral abscissa {abscissa:e}, spectrum {spectrum:?})")]
    CertificateRefused { abscissa: f64, spectrum: Vec<(f64, f64)> },

    #[error("special case precondition violated: {0}")]
    CasePrecondition(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("pair is not detectable: {0}")]
    NotDetectable(String),

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error("frame mismatch: {0}")]
    FrameMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures that come out of a numerical computation rather than
    /// from invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepSizeUnderflow { .. }
                | Error::FiniteEscape { .. }
                | Error::NonFinite(_)
                | Error::CertificateRefused { .. }
                | Error::Numerical(_)
                | Error::NotPositiveDefinite { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
