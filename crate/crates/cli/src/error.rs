use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{name}` not found; available columns: {available}")]
    MissingColumn { name: String, available: String },
    #[error("no numeric columns selected")]
    EmptySelection,
    #[error("non-numeric or missing values at {}", .0.join(", "))]
    BadCells(Vec<String>),
    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] hth_core::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
