use thiserror::Error;

/// Crate-wide error type.
///
/// Cloneable so that a failed shared component can be reported by every
/// estimator that depends on it without aborting the rest of a run.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("data error: {0}")]
    Data(String),

    #[error("column `{0}` not found")]
    ColumnNotFound(String),

    #[error("exposure column `{column}` contains non-binary value {value}")]
    NonBinaryExposure { column: String, value: String },

    #[error("empty {0} subsample: exposure must take both values 0 and 1")]
    EmptySubsample(&'static str),

    #[error("formula syntax error at position {position}: {message}")]
    FormulaSyntax { position: usize, message: String },

    #[error("unknown function `{0}` in formula (only `ns` is supported)")]
    UnknownFunction(String),

    #[error("spline degrees of freedom must be a positive integer, got `{0}`")]
    InvalidSplineDf(String),

    #[error("spline variable `{0}` is constant on the fitting sample (degenerate knots)")]
    DegenerateKnots(String),

    #[error("categorical level `{level}` of `{variable}` was not seen at fit time")]
    UnseenLevel { variable: String, level: String },

    #[error("design matrix is rank deficient; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("IRLS did not converge within {0} iterations")]
    NonConvergence(usize),

    #[error("complete separation detected (|coefficient| exceeded {0} on the logit scale)")]
    Separation(f64),

    #[error("all fit weights are zero")]
    AllZeroWeights,

    #[error("response out of bounds for family {family}: value {value}")]
    ResponseOutOfBounds { family: &'static str, value: f64 },

    #[error("weights error: {0}")]
    Weights(String),

    #[error("mediator density error: {0}")]
    Density(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
