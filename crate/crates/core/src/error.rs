use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A physical quantity is outside its admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed caller input (sample lists, simulation specs, ...).
    #[error("invalid input: {0}")]
    Input(String),

    #[error("quadrature did not converge on [{a}, {b}]: estimate {estimate:e}, error {error:e} after {panels} panels")]
    Quadrature {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
        panels: usize,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("design infeasible: {0}")]
    DesignInfeasible(String),

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("degenerate training: {0}")]
    DegenerateTraining(String),

    #[error("non-physical channel estimate: {0}")]
    NonPhysicalEstimate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub(crate) fn require_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {value}")))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
