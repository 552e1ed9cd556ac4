use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("length error: {what} has length {got}, limit is {limit}")]
    Length { what: &'static str, got: usize, limit: usize },

    #[error("contract error: {0}")]
    Contract(String),

    /// Bernoulli masking selected no position; the caller must redraw `(t, mask)`.
    #[error("masked set is empty; redraw the mask")]
    EmptyMask,

    #[error("training error: non-finite values in {tensor}")]
    NonFinite { tensor: String },

    #[error("training error: non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("corruption error: {0}")]
    Corruption(String),

    #[error("config mismatch: checkpoint has {found}, expected {expected}")]
    ConfigMismatch { expected: String, found: String },

    #[error("missing file for {entry}: {path}")]
    Missing { entry: String, path: PathBuf },

    #[error("scheduling error: {0}")]
    Schedule(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Short machine-parsable kind tag, used by the CLI's one-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Length { .. } => "length",
            Error::Contract(_) => "contract",
            Error::EmptyMask => "empty-mask",
            Error::NonFinite { .. } | Error::NonFiniteLoss { .. } => "training",
            Error::Format(_) => "format",
            Error::Corruption(_) => "corruption",
            Error::ConfigMismatch { .. } => "config-mismatch",
            Error::Missing { .. } => "missing",
            Error::Schedule(_) => "schedule",
            Error::Io(_) => "io",
            Error::Parse(_) => "parse",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string().replace('\n', " "))
    }
}
