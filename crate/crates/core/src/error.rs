use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("composite loss with alpha = {0} requires labels")]
    MissingLabels(f64),

    #[error("missing forward cache; run forward with caching before backward")]
    MissingCache,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("label column `{column}` not present in header of {path}")]
    MissingLabelColumn { path: PathBuf, column: String },

    #[error("{path}: row {row}, column `{column}`: cannot parse `{value}` as a number")]
    MalformedCell {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("{0}: no usable rows")]
    NoRows(PathBuf),

    #[error("class {class} has {count} sample(s); stratified split needs at least 2")]
    ClassTooSmall { class: usize, count: usize },

    #[error("cannot place {clusters} cluster means in dimension {dim} with separation {separation}")]
    InfeasibleSeparation {
        clusters: usize,
        dim: usize,
        separation: f64,
    },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("cost matrix is not usable: {0}")]
    InvalidCostMatrix(String),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("config field `{field}`: {message}")]
    ConfigField { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{}: {source}", path.display())]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ConfigField {
            field: field.into(),
            message: message.into(),
        }
    }
}
