use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid structure family: {0}")]
    InvalidFamily(String),

    #[error("output space has more than {budget} structures; refusing to enumerate")]
    EnumerationBudget { budget: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("structure {0} is not valid for this family")]
    InvalidStructure(String),

    #[error("empty output space or candidate set")]
    EmptySupport,

    #[error("candidate set contains a duplicate structure (output #{0})")]
    DuplicateCandidate(usize),

    #[error("sample {sample}: observed output is missing from its candidate set")]
    MissingObserved { sample: usize },

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("training diverged at iteration {iteration}: objective is {objective}")]
    Diverged { iteration: usize, objective: f64 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
