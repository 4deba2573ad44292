use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DefError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DefError {
    #[error("series too short: N < 2 (got {0} samples)")]
    TooShort(usize),

    #[error("invalid sampling period {0}: dt must be finite and > 0")]
    InvalidDt(f64),

    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),

    #[error("{path}: row {row}: cannot parse {cell:?} as a real number")]
    Parse {
        path: PathBuf,
        row: usize,
        cell: String,
    },

    #[error("{path}: column {column:?} not found")]
    MissingColumn { path: PathBuf, column: String },

    #[error("no sampling period: pass --dt or add a `# dt=<value>` header line")]
    MissingDt,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unsupported format {0:?} (expected csv or json)")]
    UnsupportedFormat(String),

    #[error("{what} is not supported by the {format} writer")]
    UnsupportedArtifact { what: &'static str, format: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("insufficient samples: {0}")]
    Insufficient(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<DefError>,
    },
}

impl DefError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DefError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numbers themselves rather than by
    /// malformed input or arguments.
    pub fn is_numerical(&self) -> bool {
        match self {
            DefError::Numerical(_) | DefError::Insufficient(_) => true,
            DefError::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| DefError::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
