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
    #[error("xml error: {0}")]
    Xml(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("parquet error: {0}")]
    Parquet(#[from] parquet::errors::ParquetError),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown line code {0:?}")]
    UnknownLineCode(String),
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("empty dedup group")]
    EmptyGroup,
    #[error("duplicate key ({inn}, {year}) after join")]
    KeyCollision { inn: String, year: i32 },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("stage {stage} failed: {message}")]
    StageFailed { stage: String, message: String },
    #[error("geocoder unavailable: {0}")]
    ServiceUnavailable(String),
    #[error("malformed geocoder response: {0}")]
    MalformedResponse(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable code, used in diagnostics and CLI exit reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IO_ERROR",
            Error::Xml(_) | Error::MalformedDocument(_) => "MALFORMED_DOCUMENT",
            Error::Csv(_) => "MALFORMED_ROW",
            Error::Parquet(_) => "IO_ERROR",
            Error::Parse(_) => "PARSE_ERROR",
            Error::UnknownLineCode(_) => "UNKNOWN_LINE_CODE",
            Error::EmptyInput(_) => "EMPTY_INPUT",
            Error::EmptyGroup => "EMPTY_GROUP",
            Error::KeyCollision { .. } => "KEY_COLLISION",
            Error::ConfigInvalid(_) => "CONFIG_INVALID",
            Error::MissingInput(_) => "MISSING_INPUT",
            Error::StageFailed { .. } => "STAGE_FAILED",
            Error::ServiceUnavailable(_) => "SERVICE_UNAVAILABLE",
            Error::MalformedResponse(_) => "MALFORMED_RESPONSE",
        }
    }
}

impl From<quick_xml::Error> for Error {
    fn from(e: quick_xml::Error) -> Self {
        Error::Xml(e.to_string())
    }
}
