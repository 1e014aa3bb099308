use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("numerical error at {location}: {message}")]
    Numerical { location: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("index build error: {0}")]
    Build(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("malformed file {}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 2,
            Error::Data(_) | Error::Ingestion(_) | Error::Build(_) | Error::Format { .. } => 3,
            Error::MissingArtifact(_) => 4,
            Error::Shape(_) | Error::Numerical { .. } | Error::Io(_) => 1,
        }
    }
}
