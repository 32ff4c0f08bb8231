use std::path::PathBuf;

/// Errors raised by the search engine's library surface.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid or inconsistent configuration. Each entry is one problem.
    #[error("configuration error: {}", .0.join("; "))]
    Config(Vec<String>),

    /// A `REINF-*` file (or another on-disk artifact) failed to parse.
    #[error("{format} parse error at line {line} (byte {offset}): {message}")]
    Parse {
        format: &'static str,
        line: usize,
        offset: usize,
        message: String,
    },

    /// No base embedding is available for the sample.
    #[error("lookup error: no embedding for sample {0:?}")]
    MissingEmbedding(String),

    /// Mathematical precondition violated (zero norm, shape mismatch).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),

    /// Training produced a non-finite loss or gradient.
    #[error("training diverged at epoch {epoch} on tuple {tuple:?}: {detail}")]
    NonFinite {
        epoch: usize,
        tuple: String,
        detail: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(message: impl Into<String>) -> Self {
        Error::Config(vec![message.into()])
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used by the CLI's one-line errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::MissingEmbedding(_) => "lookup",
            Error::Domain(_) => "domain",
            Error::DuplicateId(_) => "duplicate-id",
            Error::NonFinite { .. } => "non-finite",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
