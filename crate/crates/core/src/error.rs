use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
///
/// Variants split into two families: validation problems (bad input, bad
/// configuration, unreachable targets) and runtime failures (I/O). The CLI
/// maps them to exit codes 1 and 2 respectively.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no path from vertex {source_vertex} to vertex {target}")]
    NoPath { source_vertex: usize, target: usize },

    #[error("invalid weight {value} on edge {edge}: weights must be finite and > 0")]
    InvalidWeight { edge: usize, value: f64 },

    #[error("edge id {edge} out of range (graph has {count} edges)")]
    EdgeOutOfRange { edge: usize, count: usize },

    #[error("vertex id {vertex} out of range (graph has {count} vertices)")]
    VertexOutOfRange { vertex: usize, count: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// True for input/configuration problems, false for runtime failures.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Csv { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
