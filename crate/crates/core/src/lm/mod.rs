//! Small autoregressive language model used as policy and world model.

pub mod checkpoint;
pub mod model;
pub mod optim;
pub mod vocab;

pub use checkpoint::{Model, CHECKPOINT_FORMAT};
pub use model::{ModelDims, ModelMeta, Params, Weights, TENSOR_NAMES};
pub use optim::{Adam, AdamConfig};
pub use vocab::{TokenId, TokenSeq, Vocab, BOS, EOS, PAD, UNK};

use serde::{Deserialize, Serialize};

/// Architecture and initialization seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub context: usize,
    pub embed: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            context: 16,
            embed: 32,
            hidden: 128,
            seed: 0,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> crate::Result<()> {
        for (field, v) in [
            ("lm.context", self.context),
            ("lm.embed", self.embed),
            ("lm.hidden", self.hidden),
        ] {
            if v == 0 {
                return Err(crate::WmError::config(field, "must be positive"));
            }
        }
        Ok(())
    }

    pub fn init(&self, vocab: Vocab) -> Model {
        let params = Params::init(&vocab, self.context, self.embed, self.hidden, self.seed);
        Model { vocab, params }
    }
}
