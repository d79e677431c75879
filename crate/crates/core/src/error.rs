use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An operation was called outside its domain (e.g. a point that the
    /// definition requires to be present is missing).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid or inconsistent run configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Rejection sampling gave up.
    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Input data violates dataset invariants.
    #[error("invalid data: {0}")]
    Data(String),

    #[error("record {id}: {source}")]
    Record {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn for_record(id: impl Into<String>, source: Error) -> Self {
        Error::Record {
            id: id.into(),
            source: Box::new(source),
        }
    }

    /// True when the error stems from configuration rather than data.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Record { source, .. } => source.is_config(),
            _ => false,
        }
    }

    /// CLI exit status: 2 for configuration errors, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        if self.is_config() {
            2
        } else {
            3
        }
    }
}
