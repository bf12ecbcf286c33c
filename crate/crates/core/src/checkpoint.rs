//! Self-describing model checkpoints.
//!
//! One JSON file holds the model kind tag, its hyperparameter blob, the
//! fitted standardizer (when one was attached), and every parameter and
//! buffer tensor with its shape. Floats are written in shortest
//! round-trip form and parsed with full precision, so a load reproduces
//! the saved model bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Standardizer;
use crate::numerics::{PersistKind, Tape};

pub const FORMAT_TAG: &str = "mint-checkpoint-v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint parse error: {0}")]
    Parse(String),
    #[error("checkpoint mismatch: {0}")]
    Mismatch(String),
}

#[derive(Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub kind: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
pub struct CheckpointFile {
    pub format: String,
    /// Model family tag: `"rvae"` or `"detector"`.
    pub kind: String,
    /// Model-specific hyperparameter/config blob.
    pub hyper: serde_json::Value,
    pub standardizer: Option<Standardizer>,
    pub entries: Vec<TensorEntry>,
}

impl CheckpointFile {
    pub fn from_tape(
        kind: &str,
        hyper: serde_json::Value,
        standardizer: Option<Standardizer>,
        tape: &Tape,
    ) -> Self {
        let entries = tape
            .registry()
            .map(|(name, var, pk)| TensorEntry {
                name: name.to_string(),
                kind: match pk {
                    PersistKind::Param => "param".to_string(),
                    PersistKind::Buffer => "buffer".to_string(),
                },
                shape: tape.shape(var).to_vec(),
                values: tape.values(var).to_vec(),
            })
            .collect();
        CheckpointFile {
            format: FORMAT_TAG.to_string(),
            kind: kind.to_string(),
            hyper,
            standardizer,
            entries,
        }
    }

    /// Copy every entry into a freshly constructed tape with the same
    /// registry. Names, kinds and shapes must match exactly.
    pub fn restore_into(&self, tape: &mut Tape) -> Result<(), CheckpointError> {
        let registered: Vec<(String, crate::numerics::Var, PersistKind)> =
            tape.registry().map(|(n, v, k)| (n.to_string(), v, k)).collect();
        if registered.len() != self.entries.len() {
            return Err(CheckpointError::Mismatch(format!(
                "model has {} tensors, checkpoint has {}",
                registered.len(),
                self.entries.len()
            )));
        }
        for entry in &self.entries {
            let Some((_, var, pk)) = registered.iter().find(|(n, _, _)| n == &entry.name) else {
                return Err(CheckpointError::Mismatch(format!("model has no tensor named {:?}", entry.name)));
            };
            let expected_kind = match pk {
                PersistKind::Param => "param",
                PersistKind::Buffer => "buffer",
            };
            if entry.kind != expected_kind {
                return Err(CheckpointError::Mismatch(format!(
                    "{}: checkpoint kind {:?} but model expects {:?}",
                    entry.name, entry.kind, expected_kind
                )));
            }
            if tape.shape(*var) != entry.shape.as_slice() {
                return Err(CheckpointError::Mismatch(format!(
                    "{}: checkpoint shape {:?} but model expects {:?}",
                    entry.name,
                    entry.shape,
                    tape.shape(*var)
                )));
            }
            tape.values_mut(*var).copy_from_slice(&entry.values);
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let path = path.as_ref();
        let json = serde_json::to_string(self).map_err(|e| CheckpointError::Parse(e.to_string()))?;
        std::fs::write(path, json)
            .map_err(|e| CheckpointError::Io { path: path.display().to_string(), source: e })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CheckpointError::Io { path: path.display().to_string(), source: e })?;
        let file: CheckpointFile =
            serde_json::from_str(&text).map_err(|e| CheckpointError::Parse(e.to_string()))?;
        if file.format != FORMAT_TAG {
            return Err(CheckpointError::Parse(format!(
                "unknown checkpoint format {:?}, expected {:?}",
                file.format, FORMAT_TAG
            )));
        }
        Ok(file)
    }
}
