use std::path::PathBuf;

use cedc_core::CoreError;
use cedc_nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("output directory {0} is not empty; pass --overwrite to replace it")]
    OutputExists(PathBuf),
    #[error("{path}: {source}")]
    Toml {
        path: String,
        source: toml::de::Error,
    },
    #[error(transparent)]
    TomlWrite(#[from] toml::ser::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<NnError> for HarnessError {
    fn from(e: NnError) -> Self {
        HarnessError::Core(e.into())
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
