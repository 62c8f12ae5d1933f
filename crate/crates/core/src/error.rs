use thiserror::Error;

/// Errors produced anywhere in the lab.
#[derive(Debug, Error)]
pub enum LabError {
    /// A caller-supplied argument is outside the operation's domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The requested computation does not fit the configured memory budget
    /// or would overflow exact integer accumulators.
    #[error("resource limit: {what} needs {required_bytes} bytes (limit {limit_bytes} bytes)")]
    Resource {
        what: String,
        required_bytes: u128,
        limit_bytes: u128,
    },

    #[error("exact integer transform would overflow: |entries| up to {bound} exceeds i64 range")]
    Overflow { bound: u128 },

    #[error("malformed sequence dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl LabError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        LabError::Argument(msg.into())
    }

    /// True for errors that map to the "resource" exit status.
    pub fn is_resource(&self) -> bool {
        matches!(self, LabError::Resource { .. } | LabError::Overflow { .. })
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
