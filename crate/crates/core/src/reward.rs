//! Sim-to-real rewards: how close is a predicted next state to the one the
//! environment actually produced.
//!
//! Free-text states are compared through a hashed character n-gram
//! embedding and a cosine-distance threshold. Structured tool responses
//! are compared with a rounded LCS F1 score.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WmError};
use crate::util::fnv1a;

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const NEXT_STATE_OPEN: &str = "<next_state>";
pub const NEXT_STATE_CLOSE: &str = "</next_state>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TagNames {
    pub think: (String, String),
    pub next_state: (String, String),
}

impl Default for TagNames {
    fn default() -> Self {
        Self {
            think: (THINK_OPEN.into(), THINK_CLOSE.into()),
            next_state: (NEXT_STATE_OPEN.into(), NEXT_STATE_CLOSE.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSpec {
    /// Distance threshold for free-text (gridhouse) states.
    pub tau_d: f64,
    /// Distance threshold for user-simulator responses.
    pub tau_d_user: f64,
    pub hash_dim: usize,
    pub ngram_n: usize,
    pub rounding_step: f64,
    pub tags: TagNames,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            tau_d: 0.2,
            tau_d_user: 0.4,
            hash_dim: 1024,
            ngram_n: 3,
            rounding_step: 0.2,
            tags: TagNames::default(),
        }
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=2.0).contains(&self.tau_d) || !(0.0..=2.0).contains(&self.tau_d_user) {
            return Err(WmError::config("reward.tau_d", "must lie in [0, 2]"));
        }
        if self.hash_dim < 64 || !self.hash_dim.is_power_of_two() {
            return Err(WmError::config(
                "reward.hash_dim",
                "must be a power of two and at least 64",
            ));
        }
        if self.ngram_n == 0 {
            return Err(WmError::config("reward.ngram_n", "must be at least 1"));
        }
        let inv = 1.0 / self.rounding_step;
        if !(self.rounding_step > 0.0 && self.rounding_step <= 1.0) || (inv - inv.round()).abs() > 1e-9
        {
            return Err(WmError::config("reward.rounding_step", "must divide 1"));
        }
        Ok(())
    }

    pub fn with_tau_d(mut self, tau_d: f64) -> Self {
        self.tau_d = tau_d;
        self
    }
}

/// Which responder produced a next state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Text,
    User,
    Tool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    FormatError,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardResult {
    pub value: f64,
    pub distance: Option<f64>,
    pub rouge: Option<f64>,
    pub failure_reason: FailureReason,
}

impl RewardResult {
    fn format_error() -> Self {
        Self {
            value: 0.0,
            distance: None,
            rouge: None,
            failure_reason: FailureReason::FormatError,
        }
    }
}

/// Hashed character n-gram term-frequency vector, L2-normalized.
///
/// Texts shorter than `n` characters contribute a single gram made of the
/// whole text. Empty text maps to the zero vector.
pub fn embed(text: &str, spec: &RewardSpec) -> Vec<f64> {
    let mut v = vec![0.0; spec.hash_dim];
    let chars: Vec<char> = text.chars().collect();
    if chars.is_empty() {
        return v;
    }
    let n = spec.ngram_n;
    let mut buf = String::new();
    let mut add = |gram: &[char], v: &mut Vec<f64>| {
        buf.clear();
        buf.extend(gram.iter());
        let bucket = (fnv1a(buf.as_bytes()) as usize) & (spec.hash_dim - 1);
        v[bucket] += 1.0;
    };
    if chars.len() < n {
        add(&chars, &mut v);
    } else {
        for w in chars.windows(n) {
            add(w, &mut v);
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// `1 - cos(u, v)`; a zero vector on either side gives distance 1.
pub fn cos_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(WmError::ShapeError(format!(
            "cos_distance: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Ok(1.0);
    }
    Ok((1.0 - dot / (nu * nv)).clamp(0.0, 2.0))
}

pub fn text_distance(a: &str, b: &str, spec: &RewardSpec) -> f64 {
    // Same dimension by construction.
    cos_distance(&embed(a, spec), &embed(b, spec)).unwrap_or(1.0)
}

fn binary_reward(pred: &str, gold: &str, tau: f64, spec: &RewardSpec) -> RewardResult {
    let distance = text_distance(pred, gold, spec);
    RewardResult {
        value: if distance < tau { 1.0 } else { 0.0 },
        distance: Some(distance),
        rouge: None,
        failure_reason: FailureReason::None,
    }
}

/// Binary embedding reward on already-extracted prediction text.
pub fn wm_reward_text(pred_text: &str, gold_text: &str, spec: &RewardSpec) -> RewardResult {
    binary_reward(pred_text, gold_text, spec.tau_d, spec)
}

fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 over whitespace tokens.
pub fn rouge_f(pred_text: &str, gold_text: &str) -> f64 {
    let p: Vec<&str> = pred_text.split_whitespace().collect();
    let g: Vec<&str> = gold_text.split_whitespace().collect();
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(&p, &g) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let precision = lcs / p.len() as f64;
    let recall = lcs / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Nearest multiple of `step`, ties rounding up.
///
/// Computed as `k / (1/step)` so that results such as 0.6 come out as the
/// exact nearest double rather than `3 * 0.2`.
pub fn round_to_step(x: f64, step: f64) -> f64 {
    let per_unit = (1.0 / step).round();
    let k = (x * per_unit + 0.5 + 1e-9).floor();
    k / per_unit
}

/// Content of the first well-formed `open ... close` pair, trimmed.
pub fn extract_tagged(text: &str, open_tag: &str, close_tag: &str) -> Result<String> {
    let start = text
        .find(open_tag)
        .ok_or_else(|| WmError::FormatError(format!("missing {open_tag}")))?;
    let body_start = start + open_tag.len();
    let end = text[body_start..]
        .find(close_tag)
        .ok_or_else(|| WmError::FormatError(format!("missing {close_tag} after {open_tag}")))?;
    Ok(text[body_start..body_start + end].trim().to_string())
}

/// Composite tool-use reward on a raw model output.
///
/// User responses get the binary embedding reward at `tau_d_user`, tool
/// responses the rounded LCS F1. Text kind falls back to the binary reward
/// at `tau_d` so the function covers every state kind.
pub fn wm_reward_tooldesk(
    pred_text: &str,
    gold_text: &str,
    kind: StateKind,
    spec: &RewardSpec,
) -> RewardResult {
    let Ok(pred) = extract_tagged(pred_text, &spec.tags.next_state.0, &spec.tags.next_state.1)
    else {
        return RewardResult::format_error();
    };
    match kind {
        StateKind::User => binary_reward(&pred, gold_text, spec.tau_d_user, spec),
        StateKind::Text => binary_reward(&pred, gold_text, spec.tau_d, spec),
        StateKind::Tool => {
            let rouge = rouge_f(&pred, gold_text);
            RewardResult {
                value: round_to_step(rouge, spec.rounding_step),
                distance: None,
                rouge: Some(rouge),
                failure_reason: FailureReason::None,
            }
        }
    }
}

/// Reward of a raw tagged model output against a gold next state.
pub fn score_prediction(raw: &str, gold: &str, kind: StateKind, spec: &RewardSpec) -> RewardResult {
    wm_reward_tooldesk(raw, gold, kind, spec)
}

pub fn task_reward(success: bool) -> f64 {
    if success {
        1.0
    } else {
        0.0
    }
}
