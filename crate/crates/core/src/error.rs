use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("corrupt dataset at {path}: {reason}")]
    CorruptDataset { path: PathBuf, reason: String },

    #[error("incompatible format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),

    #[error(
        "non-finite loss at epoch {epoch}, batch {batch}: total={total}, var={var}, tv={tv}"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        total: f64,
        var: f64,
        tv: f64,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Errors a user can fix by changing flags or inputs (exit code 1);
    /// everything else is reported as internal (exit code 2).
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::NonFiniteLoss { .. } | Error::Json(_))
    }
}

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
