use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at element {index}{context}")]
    NonFinite { index: usize, context: String },

    #[error("landmarks of subject `{subject_id}` are collinear (triangle area {area:.3e} px^2)")]
    CollinearLandmarks { subject_id: String, area: f64 },

    #[error("labels contain a single class ({positives} positive, {negatives} negative)")]
    SingleClass { positives: usize, negatives: usize },

    #[error("stratified fold {fold} lacks a class ({positives} positive, {negatives} negative)")]
    FoldMissingClass {
        fold: usize,
        positives: usize,
        negatives: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error in {}: {message}", path.display())]
    Data { path: PathBuf, message: String },

    #[error("{count} data error(s):\n{}", messages.join("\n"))]
    DataErrors { count: usize, messages: Vec<String> },

    #[error("training-set leakage: {0}")]
    Leakage(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Process exit code: 2 config, 3 data, 4 runtime/numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data { .. } | Error::DataErrors { .. } | Error::Io { .. } => 3,
            Error::NonFinite { .. } | Error::CollinearLandmarks { .. } => 3,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 4,
        }
    }
}
