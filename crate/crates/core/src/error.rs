//! Error type shared across the crate.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid SCM specification: {0}")]
    InvalidScm(String),

    #[error("invalid intervention: {0}")]
    InvalidIntervention(String),

    #[error("invalid noise distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid metric configuration: {0}")]
    InvalidMetric(String),

    #[error("expression parse error: {0}")]
    ExprParse(String),

    #[error("invalid model configuration: {0}")]
    InvalidModel(String),

    #[error("invalid training configuration: {0}")]
    InvalidTrainConfig(String),

    #[error("training aborted: loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("sample count must be at least 1")]
    EmptySample,

    #[error("unknown dataset name: {0}")]
    UnknownDataset(String),

    #[error("column mismatch: {0}")]
    ColumnMismatch(String),

    #[error("labels must be binary (0/1), found {0}")]
    NonBinaryLabel(String),

    #[error("singular design matrix while fitting node {node}")]
    SingularDesign { node: String },

    #[error("invalid benchmark plan: {0}")]
    InvalidPlan(String),

    #[error("invalid mitigation selector: {0}")]
    InvalidSelector(String),

    #[error("audit error: {0}")]
    Audit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
