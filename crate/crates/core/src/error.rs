use thiserror::Error;

pub type Result<T> = std::result::Result<T, MsviError>;

#[derive(Debug, Error)]
pub enum MsviError {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid probabilities: {0}")]
    InvalidProbabilities(String),

    #[error("invalid stage layout: {0}")]
    InvalidLayout(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid filtration: {0}")]
    InvalidFiltration(String),

    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("mapping is not monotone at scenario {scenario}: smallest symmetric eigenvalue {min_eigenvalue}")]
    NotMonotone { scenario: usize, min_eigenvalue: f64 },

    #[error("invalid box constraint: {0}")]
    InvalidBounds(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("inner solver stopped after {iterations} iterations with residual {residual:e} > {tolerance:e}")]
    InnerNotConverged {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("outer iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<MsviError>,
    },

    #[error("full enumeration needs {paths} scenarios, more than the cap of {cap}")]
    EnumerationTooLarge { paths: u128, cap: usize },

    #[error("singular linear system")]
    Singular,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Format(#[from] serde_json::Error),
}
