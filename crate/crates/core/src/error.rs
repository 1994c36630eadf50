use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
///
/// Variants are grouped by the CLI exit code they map to: configuration
/// problems (1), data/file problems (2) and numeric divergence (3).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("manifest format error: {0}")]
    Format(String),

    #[error("manifest row error: {message} at line {line}")]
    Row { line: u64, message: String },

    #[error("duplicate image_path `{path}` at line {line}")]
    Duplicate { line: u64, path: String },

    #[error("cannot decode image `{path}`: {message}")]
    Decode { path: String, message: String },

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("weights load error: {0}")]
    Load(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("file error for `{path}`: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("training diverged: non-finite loss at epoch {epoch}, step {step}")]
    Divergence { epoch: usize, step: usize },

    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// Short machine-grepable category used in CLI diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Argument(_) | Error::Config(_) => "config",
            Error::Divergence { .. } => "divergence",
            Error::Tensor(_) => "internal",
            _ => "data",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
