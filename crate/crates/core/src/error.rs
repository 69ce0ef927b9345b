use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wrong format: expected {expected}, found {found}")]
    WrongFormat { expected: String, found: String },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("{0} unexpected trailing bytes")]
    TrailingData(usize),

    #[error("unsupported maxval {0} (only 255 is accepted)")]
    UnsupportedMaxval(u32),

    #[error("class index {0} does not fit in 8 bits")]
    ClassOverflow(u16),

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("undefined metric: {0}")]
    Undefined(&'static str),

    #[error("unpaired files: {0:?}")]
    Unpaired(Vec<String>),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::WrongFormat { .. } => "wrong_format",
            Error::MalformedHeader(_) => "malformed_header",
            Error::Truncated { .. } => "truncated",
            Error::TrailingData(_) => "trailing_data",
            Error::UnsupportedMaxval(_) => "unsupported_maxval",
            Error::ClassOverflow(_) => "class_overflow",
            Error::InvalidDimensions(_) => "invalid_dimensions",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::ConfigMismatch(_) => "config_mismatch",
            Error::InvalidConfig(_) => "invalid_config",
            Error::NonFinite(_) => "non_finite",
            Error::Empty(_) => "empty",
            Error::Undefined(_) => "undefined",
            Error::Unpaired(_) => "unpaired",
        }
    }
}
