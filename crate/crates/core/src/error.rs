use thiserror::Error;

/// Crate-wide error type.
///
/// Variants split into input/validation problems (bad files, bad arguments,
/// geometry violations) and numerical failures (singular systems, divergent
/// iterations). Callers that need an exit-code style distinction can use
/// [`Error::is_numerical`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("survey file: {0}")]
    SurveyFormat(String),

    #[error("raster file: {0}")]
    RasterFormat(String),

    #[error("point ({x}, {y}) outside {domain}")]
    OutOfDomain { x: f64, y: f64, domain: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("matrix not positive definite after maximum diagonal jitter")]
    Singular,

    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),

    #[error("numerical divergence: {0}")]
    Diverged(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad inputs).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular | Error::NoConvergence(_) | Error::Diverged(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
