use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Data(#[from] halluscope_core::Error),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, line: usize, message: impl ToString) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            line,
            message: message.to_string(),
        }
    }

    pub fn config(path: &Path, message: impl ToString) -> Self {
        Error::Config {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Usage(_) => "usage",
            Error::Io { .. } => "io",
            Error::Config { .. } => "config",
            Error::Parse { .. } => "parse",
            Error::Data(_) => "data",
        }
    }

    /// 1 for usage, config and unreadable paths; 2 for bad data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Io { .. } | Error::Config { .. } => 1,
            Error::Parse { .. } | Error::Data(_) => 2,
        }
    }
}
