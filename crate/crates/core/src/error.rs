use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = EfcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EfcError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed CSV: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("unknown dataset profile `{id}` (known profiles: {})", known.join(", "))]
    UnknownProfile { id: String, known: Vec<String> },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("row {row}, column `{column}`: {reason} (value {value:?})")]
    BadCell {
        /// 1-based data row, header excluded.
        row: usize,
        column: String,
        value: String,
        reason: String,
    },

    #[error("label `{0}` not present in table")]
    MissingLabel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("input does not match the fitted model: {0}")]
    Mismatch(String),

    #[error(
        "covariance matrix is numerically singular (inversion residual {residual:e} after ridge retry); \
         increase the pseudocount weight alpha"
    )]
    Singular { residual: f64 },

    #[error(
        "feature {feature} never takes the reference symbol and alpha = 0; \
         local fields are undefined, use alpha > 0"
    )]
    UnobservedReference { feature: usize },

    #[error("model file {path}: bad `{field}`: {detail}")]
    ModelFormat {
        path: PathBuf,
        field: &'static str,
        detail: String,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl EfcError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EfcError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the environment or configuration rather than
    /// by the data or the model.
    pub fn is_config_or_io(&self) -> bool {
        matches!(
            self,
            EfcError::Io { .. }
                | EfcError::Csv { .. }
                | EfcError::UnknownProfile { .. }
                | EfcError::Schema(_)
                | EfcError::ModelFormat { .. }
        )
    }
}
