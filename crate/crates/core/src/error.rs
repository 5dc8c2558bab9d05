use thiserror::Error;

/// Errors raised across the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("components overlap at protograph entry ({row}, {col})")]
    Disjointness { row: usize, col: usize },
    #[error("circulant power {power} at ({row}, {col}) is outside 0..{z}")]
    PowerOutOfRange {
        row: usize,
        col: usize,
        power: i64,
        z: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
    #[error("base matrices are not nested: stage {stage} drops entry ({row}, {col})")]
    NotNested { stage: usize, row: usize, col: usize },
    #[error("distribution index ranges overlap or leave a gap: {0}")]
    DistributionRange(String),
    #[error("size guard exceeded: {edges} edges for cycle length {length} (limit {limit})")]
    SizeGuard {
        edges: usize,
        length: usize,
        limit: usize,
    },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("optimization budget exhausted: {0}")]
    BudgetExhausted(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("stage {stage} failed: {source}")]
    Stage { stage: usize, source: Box<Error> },
}

impl Error {
    /// The innermost error, past any stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
