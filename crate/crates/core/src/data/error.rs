use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("generation: {0}")]
    Generation(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("stratification: class {class} has {count} members, need at least {k}")]
    Stratification { class: u8, count: usize, k: usize },

    #[error("resampling requires both classes, got only class {0}")]
    SingleClass(u8),

    #[error("dataset integrity: record `{id}`: {reason}")]
    Integrity { id: String, reason: String },

    #[error("dataset format: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("manifest: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;
