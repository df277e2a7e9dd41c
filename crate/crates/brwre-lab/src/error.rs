use thiserror::Error;

pub type LabResult<T> = Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] brwre_core::Error),
    #[error("configuration: {0}")]
    Config(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("degenerate binning: {0}")]
    DegenerateBinning(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl LabError {
    /// 2 for invalid input, 4 for exhausted budgets, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Core(e) if e.is_validation() => 2,
            LabError::Core(e) if e.is_budget() => 4,
            LabError::Config(_) | LabError::Json(_) | LabError::Io(_) => 2,
            _ => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "validation",
            4 => "budget",
            _ => "numerical",
        }
    }
}
