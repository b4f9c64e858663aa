//! Supervised and policy-gradient training loops.

pub mod base;
pub mod grpo;
pub mod sft;
pub mod stages;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WmError};
use crate::lm::Model;
use crate::reward::RewardSpec;

pub use base::{build_vocab, format_corpus, pretrain, BaseConfig};
pub use grpo::{
    group_advantages, grpo_gradient, grpo_objective, grpo_step, propagate_reward, update_from_samples,
    GroupBatch, GrpoStats, PgSample,
};
pub use sft::{sft_train, SftExample};
pub use stages::{distill_train, policy_rl_train, rft_train, wm_sft_train, wmrl_train};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretrain,
    WmSft,
    Wmrl,
    PolicyRl,
    Rft,
    Distill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub group_size: usize,
    pub clip_eps: f64,
    pub kl_coef: f64,
    pub gamma: f64,
    /// Optimizer steps for the RL stages.
    pub steps: usize,
    /// Passes over the data for the supervised stages.
    pub epochs: usize,
    pub seed: u64,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub history: usize,
    /// Rollouts per task when a stage collects its own data.
    pub rollouts_per_task: usize,
    pub reward: RewardSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 16,
            group_size: 8,
            clip_eps: 0.2,
            kl_coef: 0.01,
            gamma: 1.0,
            steps: 100,
            epochs: 3,
            seed: 0,
            temperature: 1.0,
            max_new_tokens: 48,
            history: crate::prompts::DEFAULT_HISTORY,
            rollouts_per_task: 3,
            reward: RewardSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, m: &str| Err(WmError::config(format!("train.{f}"), m));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr", "must be positive and finite");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if self.group_size < 2 {
            return bad("group_size", "must be at least 2");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps", "must lie in (0, 1)");
        }
        if !(self.kl_coef >= 0.0) {
            return bad("kl_coef", "must be nonnegative");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", "must lie in (0, 1]");
        }
        if self.max_new_tokens == 0 {
            return bad("max_new_tokens", "must be positive");
        }
        if self.rollouts_per_task == 0 {
            return bad("rollouts_per_task", "must be positive");
        }
        self.reward.validate()
    }
}

/// One line of a training metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub mean_reward: Option<f64>,
    pub kl: Option<f64>,
    pub clip_frac: Option<f64>,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: Model,
    pub metrics: Vec<StepMetrics>,
    /// Number of training examples (supervised) or prompts per step (RL).
    pub dataset_size: usize,
}

pub fn write_metrics(path: &Path, metrics: &[StepMetrics]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for m in metrics {
        serde_json::to_writer(&mut f, m)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}
