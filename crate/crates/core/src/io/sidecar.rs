//! JSON sidecars: similarity scores, attention matrices, configs, manifests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pruner::AttentionMatrix;

/// Image-text similarity per frame for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSidecar {
    pub question: String,
    pub frame_indices: Vec<usize>,
    pub scores: Vec<f64>,
}

impl ScoreSidecar {
    pub fn validate(&self) -> Result<()> {
        if self.frame_indices.len() != self.scores.len() {
            return Err(Error::Input(format!(
                "score sidecar has {} frame indices but {} scores",
                self.frame_indices.len(),
                self.scores.len()
            )));
        }
        if let Some(s) = self.scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::Input(format!("score sidecar contains non-finite score {s}")));
        }
        Ok(())
    }

    /// Scores looked up by frame index, in the order requested.
    pub fn lookup(&self, frames: &[usize]) -> Result<Vec<f64>> {
        let by_index: BTreeMap<usize, f64> = self
            .frame_indices
            .iter()
            .copied()
            .zip(self.scores.iter().copied())
            .collect();
        frames
            .iter()
            .map(|i| {
                by_index
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::Input(format!("score sidecar has no score for frame {i}")))
            })
            .collect()
    }
}

/// Last-layer attention per frame, each a `Q x N` (or `Q x (N+1)` with a
/// leading class column) matrix of query rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionSidecar {
    pub frame_indices: Vec<usize>,
    pub matrices: Vec<Vec<Vec<f64>>>,
}

impl AttentionSidecar {
    pub fn validate(&self) -> Result<()> {
        if self.frame_indices.len() != self.matrices.len() {
            return Err(Error::Input(format!(
                "attention sidecar has {} frame indices but {} matrices",
                self.frame_indices.len(),
                self.matrices.len()
            )));
        }
        Ok(())
    }

    /// Matrix for `frame`, with the class column removed when `tokens + 1` wide.
    pub fn matrix_for(&self, frame: usize, tokens: usize) -> Result<AttentionMatrix> {
        let pos = self
            .frame_indices
            .iter()
            .position(|&i| i == frame)
            .ok_or_else(|| Error::Input(format!("attention sidecar has no matrix for frame {frame}")))?;
        let m = AttentionMatrix::from_rows(&self.matrices[pos])?;
        if m.keys == tokens + 1 {
            m.without_class_token()
        } else if m.keys == tokens {
            Ok(m)
        } else {
            Err(Error::Dimension(format!(
                "attention matrix for frame {frame} has {} keys, expected {tokens} or {}",
                m.keys,
                tokens + 1
            )))
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

/// Pretty JSON with a trailing newline; byte-stable for identical values.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable value");
    bytes.push(b'\n');
    bytes
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json_bytes(value)).map_err(|e| Error::io(path, e))
}

pub fn read_score_sidecar(path: impl AsRef<Path>) -> Result<ScoreSidecar> {
    let s: ScoreSidecar = read_json(path)?;
    s.validate()?;
    Ok(s)
}

pub fn read_attention_sidecar(path: impl AsRef<Path>) -> Result<AttentionSidecar> {
    let s: AttentionSidecar = read_json(path)?;
    s.validate()?;
    Ok(s)
}
