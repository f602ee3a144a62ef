use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value in {what} at row {row}")]
    NonFinite { what: String, row: usize },

    #[error("index {index} out of vocabulary for field {field} (size {vocab})")]
    OutOfVocabulary {
        field: usize,
        index: usize,
        vocab: usize,
    },

    #[error("design matrix is rank deficient; dependent columns {columns:?}")]
    RankDeficient { columns: Vec<usize> },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("price column is perfectly collinear with the other covariates (R^2 = 1)")]
    PerfectCollinearity,

    #[error("elasticity undefined: predicted quantity {quantity} is not positive")]
    UndefinedElasticity { quantity: f64 },

    #[error("no feasible price vector found; binding constraint: {binding}")]
    Infeasible { binding: String },

    #[error("grid oracle supports at most {max} products, got {found}")]
    TooManyProducts { found: usize, max: usize },

    #[error("tape does not match network: {0}")]
    TapeMismatch(String),

    #[error("unbalanced panel: {0}")]
    UnbalancedPanel(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported model schema version {0}")]
    SchemaVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(what: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            what,
            expected,
            found,
        }
    }

    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::EmptyInput(_) => "empty_input",
            Error::NonFinite { .. } => "non_finite",
            Error::OutOfVocabulary { .. } => "out_of_vocabulary",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::DegenerateVariance(_) => "degenerate_variance",
            Error::PerfectCollinearity => "perfect_collinearity",
            Error::UndefinedElasticity { .. } => "undefined_elasticity",
            Error::Infeasible { .. } => "infeasible",
            Error::TooManyProducts { .. } => "too_many_products",
            Error::TapeMismatch(_) => "tape_mismatch",
            Error::UnbalancedPanel(_) => "unbalanced_panel",
            Error::Parse { .. } => "parse",
            Error::SchemaVersion(_) => "schema_version",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
