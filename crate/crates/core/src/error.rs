use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("empty sector: {0}")]
    EmptySector(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("z = {z} lies within {margin:.1e} of a pole at {pole}")]
    Pole {
        z: Complex64,
        pole: f64,
        margin: f64,
    },

    #[error("matrix is numerically singular (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("chemical potential outside the domain of the partition function: {0}")]
    ChemicalPotentialDomain(String),

    #[error("evolution is not trace class: {0}")]
    TraceClass(String),

    #[error("partition function vanishes: {0}")]
    VanishingPartitionFunction(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("invalid model file: {0}")]
    ModelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable class used in report error lines.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Argument(_) => "argument",
            Error::EmptySector(_) => "empty-sector",
            Error::Structural(_) => "structural",
            Error::Pole { .. } => "pole",
            Error::Singular { .. } => "singular",
            Error::ChemicalPotentialDomain(_) => "domain",
            Error::TraceClass(_) => "trace-class",
            Error::VanishingPartitionFunction(_) => "partition-function",
            Error::Quadrature(_) => "quadrature",
            Error::NotPositiveDefinite(_) => "not-positive-definite",
            Error::Unsupported(_) => "unsupported",
            Error::GridTooCoarse(_) => "grid",
            Error::ModelFile(_) => "model-file",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
