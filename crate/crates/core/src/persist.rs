//! Versioned JSON envelopes for saved models.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: expected a `{expected}` file of version {version}")]
    WrongFormat {
        path: PathBuf,
        expected: &'static str,
        version: u32,
    },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    model: T,
}

/// A model written as `{"format": ..., "version": ..., "model": ...}`.
pub trait Persist: Serialize + DeserializeOwned {
    const FORMAT: &'static str;
    const VERSION: u32 = 1;

    fn to_json(&self) -> String {
        serde_json::to_string(&Envelope {
            format: Self::FORMAT.to_string(),
            version: Self::VERSION,
            model: self,
        })
        .expect("models serialize to JSON")
    }

    fn save(&self, path: &Path) -> Result<(), PersistError> {
        fs::write(path, self.to_json()).map_err(|source| PersistError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    fn load(path: &Path) -> Result<Self, PersistError> {
        let text = fs::read_to_string(path).map_err(|source| PersistError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let envelope: Envelope<serde_json::Value> = serde_json::from_str(&text)?;
        if envelope.format != Self::FORMAT || envelope.version != Self::VERSION {
            return Err(PersistError::WrongFormat {
                path: path.to_path_buf(),
                expected: Self::FORMAT,
                version: Self::VERSION,
            });
        }
        Ok(serde_json::from_value(envelope.model)?)
    }
}
