//! JSON checkpoints holding parameters together with their vocabulary.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelMeta, Params, Weights};
use super::vocab::Vocab;
use crate::error::{Result, WmError};

pub const CHECKPOINT_FORMAT: &str = "wmforge-ckpt-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    meta: ModelMeta,
    vocab: Vocab,
    tensors: BTreeMap<String, Tensor>,
}

/// A model and the vocabulary it reads.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub vocab: Vocab,
    pub params: Params,
}

impl Model {
    pub fn save(&self, path: &Path) -> Result<()> {
        let dims = self.params.dims();
        let tensors = Weights::shapes(dims)
            .into_iter()
            .zip(self.params.weights.tensors())
            .map(|((name, shape), (_, data))| {
                (
                    name.to_string(),
                    Tensor {
                        shape,
                        data: data.to_vec(),
                    },
                )
            })
            .collect();
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            meta: self.params.meta.clone(),
            vocab: self.vocab.clone(),
            tensors,
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, serde_json::to_vec(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => WmError::NotFound(path.display().to_string()),
            _ => WmError::Io(e),
        })?;
        let mut file: CheckpointFile = serde_json::from_slice(&bytes)?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(WmError::FormatError(format!(
                "unknown checkpoint format {:?}",
                file.format
            )));
        }
        let dims = file.meta.dims;
        if file.vocab.len() != dims.vocab || file.vocab.hash() != file.meta.vocab_hash {
            return Err(WmError::ShapeError("checkpoint vocabulary does not match its metadata".into()));
        }
        let mut weights = Weights::zeros(&dims);
        for ((name, shape), (_, slot)) in Weights::shapes(&dims).into_iter().zip(weights.tensors_mut()) {
            let t = file
                .tensors
                .remove(name)
                .ok_or_else(|| WmError::FormatError(format!("missing tensor {name}")))?;
            let n: usize = shape.iter().product();
            if t.shape != shape || t.data.len() != n {
                return Err(WmError::ShapeError(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape, shape
                )));
            }
            *slot = t.data;
        }
        Ok(Self {
            vocab: file.vocab,
            params: Params {
                meta: file.meta,
                weights,
            },
        })
    }
}
