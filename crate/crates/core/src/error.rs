use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("fraction at index {index} is {value}, outside [0, 1]")]
    FractionOutOfRange { index: usize, value: f64 },

    #[error("weight at index {index} is negative ({value})")]
    NegativeWeight { index: usize, value: f64 },

    #[error("invalid law parameters: {0}")]
    InvalidLaw(String),

    #[error("matrix must be square with dimension >= {min}, got {rows}x{cols}")]
    BadShape { rows: usize, cols: usize, min: usize },

    #[error("negative off-diagonal entry {value} at ({row}, {col})")]
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },

    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("row {row} sums to {sum}, expected {expected}")]
    RowSum { row: usize, sum: f64, expected: f64 },

    #[error("state {state} out of range for dimension {dim}")]
    StateOutOfRange { state: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("not a probability vector: {0}")]
    NotProbability(String),

    #[error("vector is not stationary for the generator (residual {residual:e})")]
    NotStationary { residual: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("generator not admissible for the moment engine: {0}")]
    Inadmissible(String),

    #[error("stick construction exceeded {0} terms before reaching the truncation threshold")]
    TruncationCap(usize),

    #[error("return cycle exceeded {0} steps")]
    CycleCap(usize),

    #[error("replicate {replicate}: {source}")]
    Replicate {
        replicate: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag, used in the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::FractionOutOfRange { .. } => "fraction_out_of_range",
            Error::NegativeWeight { .. } => "negative_weight",
            Error::InvalidLaw(_) => "invalid_law",
            Error::BadShape { .. } => "bad_shape",
            Error::NegativeOffDiagonal { .. } => "negative_off_diagonal",
            Error::NegativeEntry { .. } => "negative_entry",
            Error::RowSum { .. } => "row_sum",
            Error::StateOutOfRange { .. } => "state_out_of_range",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotProbability(_) => "not_probability",
            Error::NotStationary { .. } => "not_stationary",
            Error::Singular(_) => "singular",
            Error::Numeric(_) => "numeric",
            Error::Inadmissible(_) => "inadmissible",
            Error::TruncationCap(_) => "truncation_cap",
            Error::CycleCap(_) => "cycle_cap",
            Error::Replicate { .. } => "replicate",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
