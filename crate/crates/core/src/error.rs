use thiserror::Error;

/// Errors raised by the navigation stack.
///
/// Runtime outcomes of a repeat run (lost, timeout, collision) are trace
/// events, not errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NavError {
    #[error("statistic unavailable: need at least 2 matches with non-zero destination spread (got {matches} matches)")]
    DegenerateSpread { matches: usize },

    #[error("empty match set")]
    EmptyMatch,

    #[error("teach frame {frame} sees only {visible} landmarks (need at least {required})")]
    TeachDegenerate {
        frame: usize,
        visible: usize,
        required: usize,
    },

    #[error("invalid visual path: {0}")]
    InvalidPath(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid world: {0}")]
    InvalidWorld(String),

    #[error("empty point list")]
    EmptyPoints,
}

pub type Result<T> = std::result::Result<T, NavError>;

/// Failure to read or parse an input file.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Parse diagnostics carry the line and column of the offending input.
    #[error("{}: {message}", path.display())]
    Parse {
        path: std::path::PathBuf,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Invalid {
        path: std::path::PathBuf,
        #[source]
        source: NavError,
    },
}

impl LoadError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn parse(path: &std::path::Path, message: impl Into<String>) -> Self {
        Self::Parse {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}
