//! From rollouts to a curated next-state-prediction dataset.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::envsim::{EnvKind, Split, Suite, TaskDef};
use crate::error::{Result, WmError};
use crate::jsonfmt::to_spaced_string;
use crate::lm::{Model, EOS};
use crate::prompts::{wm_prompt, wm_target, Exchange};
use crate::reward::{score_prediction, RewardSpec, StateKind};
use crate::rollout::{run_episodes, Actor, Trajectory};
use crate::trainer::{sft_train, SftExample, TrainConfig, TrainOutput};
use crate::util::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub n_rollouts: usize,
    pub temperature: f64,
    pub history: usize,
    pub split_ratio: f64,
    pub k_attempts: usize,
    pub tau_d_data: f64,
    pub tau_easy: f64,
    pub keep_prob: f64,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_rollouts: 6,
            temperature: 1.0,
            history: crate::prompts::DEFAULT_HISTORY,
            split_ratio: 0.9,
            k_attempts: 10,
            tau_d_data: 0.1,
            tau_easy: 0.0,
            keep_prob: 0.1,
            max_new_tokens: 48,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, m: &str| Err(WmError::config(format!("pipeline.{f}"), m));
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad("split_ratio", "must lie in (0, 1)");
        }
        if self.k_attempts == 0 {
            return bad("k_attempts", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.keep_prob) {
            return bad("keep_prob", "must lie in [0, 1]");
        }
        if self.n_rollouts == 0 {
            return bad("n_rollouts", "must be positive");
        }
        if !(self.tau_d_data >= 0.0) {
            return bad("tau_d_data", "must be nonnegative");
        }
        Ok(())
    }

    /// Reward settings used when scoring filter-model samples.
    pub fn filter_reward(&self, base: &RewardSpec) -> RewardSpec {
        base.clone().with_tau_d(self.tau_d_data)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryItem {
    pub obs: String,
    pub act: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub history: Vec<HistoryItem>,
    pub obs: String,
    pub action: String,
    pub gold: String,
    pub kind: StateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub easy_score: Option<f64>,
    /// Task instruction shown at the top of the prompt.
    #[serde(default)]
    pub instruction: String,
}

impl Triplet {
    pub fn env_kind(&self) -> EnvKind {
        match self.kind {
            StateKind::Text => EnvKind::Gridhouse,
            StateKind::User | StateKind::Tool => EnvKind::Tooldesk,
        }
    }

    pub fn prompt(&self, history: usize) -> String {
        let hist: Vec<Exchange> = self
            .history
            .iter()
            .map(|h| Exchange {
                obs: &h.obs,
                act: &h.act,
            })
            .collect();
        wm_prompt(self.env_kind(), &self.instruction, &hist, &self.obs, &self.action, history)
    }

    pub fn sft_example(&self, history: usize) -> SftExample {
        SftExample::new(self.prompt(history), wm_target(&self.gold))
    }
}

/// `n_rollouts` episodes of the model per train task, sampled at the
/// configured temperature.
pub fn collect_rollouts(suite: &Suite, model: &Model, cfg: &PipelineConfig) -> Result<Vec<Trajectory>> {
    let tasks: Vec<&TaskDef> = suite.tasks_in(Split::Train).collect();
    let actor = Actor::Model {
        model,
        temperature: cfg.temperature,
        max_new_tokens: cfg.max_new_tokens,
    };
    Ok(run_episodes(suite, &tasks, cfg.n_rollouts, actor, cfg.history, cfg.seed)?
        .into_iter()
        .map(|e| e.trajectory)
        .collect())
}

/// One triplet per turn: the last `h` exchanges, the current observation,
/// the action, and the observation that followed. Tool responses are
/// replaced by their value-free schema.
pub fn to_triplets(trajectories: &[Trajectory], h: usize) -> Vec<Triplet> {
    let mut out = Vec::new();
    for traj in trajectories {
        for (t, turn) in traj.turns.iter().enumerate() {
            let history = traj.turns[t.saturating_sub(h)..t]
                .iter()
                .map(|p| HistoryItem {
                    obs: p.obs.clone(),
                    act: p.action.clone(),
                })
                .collect();
            let next = traj.next_obs(t);
            let gold = match turn.kind {
                StateKind::Tool => mask_json_values(next),
                _ => next.to_string(),
            };
            out.push(Triplet {
                history,
                obs: turn.obs.clone(),
                action: turn.action.clone(),
                gold,
                kind: turn.kind,
                easy_score: None,
                instruction: traj.instruction.clone(),
            });
        }
    }
    out
}

/// Deterministic shuffled split into (train, validation).
pub fn split_dataset<T: Clone>(items: &[T], ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(WmError::config("pipeline.split_ratio", "must lie in (0, 1)"));
    }
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut rng_for(seed, &[0x591]));
    let n_train = (ratio * items.len() as f64).round() as usize;
    let pick = |ix: &[usize]| ix.iter().map(|&i| items[i].clone()).collect();
    Ok((pick(&idx[..n_train]), pick(&idx[n_train..])))
}

/// Supervised next-state model used only to score triplet difficulty.
pub fn train_filter_model(base: &Model, validation: &[Triplet], cfg: &TrainConfig) -> Result<TrainOutput> {
    if validation.is_empty() {
        return Err(WmError::EmptyDataset("validation split".into()));
    }
    let data: Vec<SftExample> = validation.iter().map(|t| t.sft_example(cfg.history)).collect();
    sft_train(base, &data, cfg)
}

/// Mean reward of `k` temperature-1 samples from the filter model.
pub fn easy_score(
    filter: &Model,
    triplet: &Triplet,
    k: usize,
    history: usize,
    max_new_tokens: usize,
    spec: &RewardSpec,
    seed: u64,
) -> Result<f64> {
    if k == 0 {
        return Err(WmError::config("pipeline.k_attempts", "must be at least 1"));
    }
    let prompt = filter.vocab.encode(&triplet.prompt(history));
    let mut rng = rng_for(seed, &[0xea5]);
    let mut total = 0.0;
    for _ in 0..k {
        let (c, _) = filter.params.sample(&prompt, 1.0, max_new_tokens, EOS, &mut rng);
        total += score_prediction(&filter.vocab.decode(&c), &triplet.gold, triplet.kind, spec).value;
    }
    Ok(total / k as f64)
}

/// Attach an easy score to every triplet; triplet `i` uses its own stream.
pub fn score_triplets(filter: &Model, triplets: &[Triplet], cfg: &PipelineConfig, spec: &RewardSpec) -> Result<Vec<Triplet>> {
    let spec = cfg.filter_reward(spec);
    triplets
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let s = easy_score(
                filter,
                t,
                cfg.k_attempts,
                cfg.history,
                cfg.max_new_tokens,
                &spec,
                crate::util::stream_seed(cfg.seed, &[i as u64]),
            )?;
            Ok(Triplet {
                easy_score: Some(s),
                ..t.clone()
            })
        })
        .collect()
}

/// Keep every triplet whose score is at most `tau_easy`; keep the rest
/// independently with probability `keep_prob`.
pub fn subsample_easy(triplets: &[Triplet], tau_easy: f64, keep_prob: f64, seed: u64) -> Result<Vec<Triplet>> {
    if triplets.is_empty() {
        return Err(WmError::EmptyDataset("scored triplets".into()));
    }
    let mut out = Vec::new();
    for (i, t) in triplets.iter().enumerate() {
        let score = t
            .easy_score
            .ok_or_else(|| WmError::FormatError(format!("triplet {i} has no easy score")))?;
        let easy = score > tau_easy;
        if !easy || rng_for(seed, &[0x5b5, i as u64]).gen_bool(keep_prob) {
            out.push(t.clone());
        }
    }
    Ok(out)
}

fn schema_of(v: &Value) -> Value {
    match v {
        Value::Object(m) => {
            let props: Map<String, Value> = m.iter().map(|(k, v)| (k.clone(), schema_of(v))).collect();
            json!({"type": "object", "properties": props})
        }
        Value::Array(a) => json!({
            "type": "array",
            "items": a.first().map(schema_of).unwrap_or_else(|| json!({})),
        }),
        Value::String(_) => json!({"type": "string"}),
        Value::Number(_) => json!({"type": "number"}),
        Value::Bool(_) => json!({"type": "boolean"}),
        Value::Null => json!({"type": "null"}),
    }
}

/// Replace every leaf value of a JSON document by its type schema; text
/// that is not JSON is returned unchanged.
pub fn mask_json_values(text: &str) -> String {
    match serde_json::from_str::<Value>(text) {
        Ok(v) => to_spaced_string(&schema_of(&v)),
        Err(_) => text.to_string(),
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => WmError::NotFound(path.display().to_string()),
        _ => WmError::Io(e),
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| WmError::ParseError {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
