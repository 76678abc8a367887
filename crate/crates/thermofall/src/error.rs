use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("model build failed at layer `{layer}`: {reason}")]
    ModelBuild { layer: String, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite loss in epoch {epoch}, batch {batch}, term `{term}`")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        term: String,
    },

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("missing upstream artifact for stage `{stage}`: run `{required}` first ({path})")]
    MissingStage {
        stage: String,
        required: String,
        path: PathBuf,
    },

    #[error("{0}")]
    Data(String),

    #[error("metric undefined: {0}")]
    Eval(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
