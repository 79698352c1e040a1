use thiserror::Error;

pub type Result<T, E = NsumError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NsumError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{path}:{line}: {msg}")]
    Ingest {
        path: String,
        line: u64,
        msg: String,
    },

    #[error("need {needed} candidate groups, found {available}")]
    CaseConstruction { needed: usize, available: usize },

    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),

    #[error("singular expression: {0}")]
    Singularity(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NsumError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        NsumError::Parameter(msg.into())
    }

    /// True for errors caused by reading or writing files.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            NsumError::Io(_) | NsumError::Csv(_) | NsumError::Json(_) | NsumError::Ingest { .. }
        )
    }
}
