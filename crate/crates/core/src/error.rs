use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: byte offset {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("upstream hash mismatch for {what}: expected {expected:016x}, found {found:016x}")]
    HashMismatch {
        what: &'static str,
        expected: u64,
        found: u64,
    },

    #[error("tetrahedron {tet} is inverted or degenerate (signed volume {volume:e})")]
    InvertedTet { tet: usize, volume: f64 },

    #[error("singular system at pivot {pivot}; fix more nodes to remove rigid-body modes")]
    SingularSystem { pivot: usize },

    #[error("probe footprint is empty at grid position ({i}, {j}), angle code {angle}")]
    EmptyFootprint { i: i32, j: i32, angle: u8 },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data error, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::SingularSystem { .. } | Error::Numerical(_) | Error::InvertedTet { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
