use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("unknown configuration keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("missing configuration keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("bad value for `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("plot data is missing columns: {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: gff_core::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn value_err(key: &str, msg: impl Into<String>) -> LabError {
    LabError::Value {
        key: key.to_string(),
        msg: msg.into(),
    }
}

/// Attach module context to core errors.
pub(crate) trait CoreContext<T> {
    fn ctx(self, context: &str) -> Result<T>;
}

impl<T> CoreContext<T> for gff_core::Result<T> {
    fn ctx(self, context: &str) -> Result<T> {
        self.map_err(|source| LabError::Core {
            context: context.to_string(),
            source,
        })
    }
}
