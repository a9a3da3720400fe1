//! Checkpoint files: every stage output is a JSON document carrying the
//! schema version and the fingerprint of the config that produced it.
//!
//! Checkpoints are the pipeline's controllability surface — they are meant
//! to be hand-edited between stages, so they are pretty-printed and each
//! stage reloads them through full validation.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Envelope flattened around a stage document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub schema_version: u32,
    pub fingerprint: String,
    #[serde(flatten)]
    pub data: T,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("missing checkpoint: {0}")]
    Missing(String),
    #[error("checkpoint {path}: {detail}")]
    Invalid { path: String, detail: String },
    #[error("checkpoint {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Write `data` as a pretty-printed checkpoint with a trailing newline.
pub fn save<T: Serialize>(path: &Path, fingerprint: &str, data: &T) -> Result<(), CheckpointError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    let doc = Checkpoint {
        schema_version: SCHEMA_VERSION,
        fingerprint: fingerprint.to_string(),
        data,
    };
    let mut body = serde_json::to_string_pretty(&doc).map_err(|e| CheckpointError::Invalid {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    body.push('\n');
    std::fs::write(path, body).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load a checkpoint; a missing file reports the stage name, not the path,
/// so `write` can say "missing checkpoint: outline".
pub fn load<T: DeserializeOwned>(path: &Path, stage: &str) -> Result<Checkpoint<T>, CheckpointError> {
    if !path.exists() {
        return Err(CheckpointError::Missing(stage.to_string()));
    }
    let raw = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&raw).map_err(|e| CheckpointError::Invalid {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::{Deserialize, Serialize};

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Doc {
        items: Vec<String>,
    }

    #[test]
    fn envelope_flattens_around_the_document() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("doc.json");
        save(&path, "fp123", &Doc { items: vec!["a".to_string()] }).unwrap();
        let raw = std::fs::read_to_string(&path).unwrap();
        let value: serde_json::Value = serde_json::from_str(&raw).unwrap();
        assert_eq!(value["schema_version"], 1);
        assert_eq!(value["fingerprint"], "fp123");
        assert!(value["items"].is_array());
        let back: Checkpoint<Doc> = load(&path, "doc").unwrap();
        assert_eq!(back.data.items, vec!["a".to_string()]);
    }

    #[test]
    fn missing_checkpoint_names_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let err = load::<Doc>(&dir.path().join("absent.json"), "outline").unwrap_err();
        assert_eq!(err.to_string(), "missing checkpoint: outline");
    }

    #[test]
    fn hand_edited_checkpoint_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("doc.json");
        save(&path, "fp", &Doc { items: vec!["a".to_string()] }).unwrap();
        // Simulate an operator edit.
        let edited = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"a\"", "\"edited\"");
        std::fs::write(&path, edited).unwrap();
        let back: Checkpoint<Doc> = load(&path, "doc").unwrap();
        assert_eq!(back.data.items, vec!["edited".to_string()]);
    }
}
