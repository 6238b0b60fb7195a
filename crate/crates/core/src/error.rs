use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("non-finite gradient at {path}")]
    NonFiniteGradient { path: String },

    #[error("training diverged: {0}")]
    Training(String),

    #[error("propensity fit failed: {0}")]
    Fit(String),

    #[error("no support for action {action}")]
    NoSupport { action: usize },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("state space too large: {states} joint states (limit {limit})")]
    Capacity { states: u128, limit: u128 },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether the failure is numerical (divergence, underflow) rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteGradient { .. } | Error::Training(_) | Error::Estimation(_)
        )
    }

    /// Whether the failure stems from caller-supplied configuration or arguments.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Argument(_) | Error::Config(_) | Error::Capacity { .. })
    }
}
