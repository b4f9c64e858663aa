//! Base model: knows the generic text distribution and the prompt/answer
//! formats of both roles, but nothing about environment dynamics.
//!
//! Acting examples pair real prompts with random plausible actions, and
//! next-state examples pair real prompts with observations drawn uniformly
//! from unrelated transitions.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::sft::{sft_train, SftExample};
use super::{TrainConfig, TrainOutput};
use crate::corpus::generic_corpus;
use crate::datapipe::mask_json_values;
use crate::envsim::{EnvKind, EnvState, Split, Suite, TaskDef};
use crate::error::Result;
use crate::lm::{Model, Vocab};
use crate::prompts::{policy_prompt, policy_target, wm_prompt, wm_target, Exchange};
use crate::reward::StateKind;
use crate::rollout::{run_episodes, Actor};
use crate::util::{rng_for, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseConfig {
    pub generic_docs: usize,
    pub heldout_docs: usize,
    pub policy_examples: usize,
    pub wm_examples: usize,
    /// Probability that an acting example uses an action that is available
    /// in the shown state rather than any well-formed action.
    pub valid_action_prob: f64,
    /// Random-play episodes per train task used to source format examples.
    pub plays_per_task: usize,
    pub seed: u64,
}

impl Default for BaseConfig {
    fn default() -> Self {
        Self {
            generic_docs: 300,
            heldout_docs: 60,
            policy_examples: 600,
            wm_examples: 600,
            valid_action_prob: 0.5,
            plays_per_task: 2,
            seed: 0,
        }
    }
}

impl BaseConfig {
    pub fn generic_train(&self) -> Vec<String> {
        generic_corpus(self.generic_docs, self.seed)
    }

    /// Generic text never used for training.
    pub fn generic_heldout(&self) -> Vec<String> {
        generic_corpus(self.heldout_docs, self.seed ^ 0x00ff_00ff_00ff_00ff)
    }
}

/// A transition observed while acting at random.
#[derive(Debug, Clone)]
struct Transition {
    instruction: String,
    history: Vec<(String, String)>,
    obs: String,
    action: String,
    next: String,
    kind: StateKind,
    state: EnvState,
}

fn random_play(suite: &Suite, task: &TaskDef, valid_prob: f64, rng: &mut Rng) -> Result<Vec<Transition>> {
    let (mut state, _) = suite.reset(&task.spec)?;
    let instruction = state.instruction();
    let mut obs = state.initial_observation();
    let mut history: Vec<(String, String)> = Vec::new();
    let mut out = Vec::new();
    while !state.is_terminal() {
        let pool = if rng.gen_bool(valid_prob) {
            state.candidate_actions()
        } else {
            state.action_space()
        };
        let action = pool.choose(rng).cloned().unwrap_or_default();
        let step = state.step(&action)?;
        out.push(Transition {
            instruction: instruction.clone(),
            history: history.clone(),
            obs: obs.clone(),
            action: action.clone(),
            next: step.observation.clone(),
            kind: step.kind,
            state: state.clone(),
        });
        history.push((std::mem::replace(&mut obs, step.observation), action));
        state = step.state;
    }
    Ok(out)
}

fn gold_text(t: &Transition) -> String {
    match t.kind {
        StateKind::Tool => mask_json_values(&t.next),
        _ => t.next.clone(),
    }
}

fn exchanges(h: &[(String, String)]) -> Vec<Exchange<'_>> {
    h.iter().map(|(o, a)| Exchange { obs: o, act: a }).collect()
}

/// Every text the models will read or write for this suite, plus the
/// generic corpora.
pub fn build_vocab(suite: &Suite, base: &BaseConfig) -> Result<Vocab> {
    let mut texts: Vec<String> = base.generic_train();
    texts.extend(base.generic_heldout());
    let all: Vec<&TaskDef> = suite.tasks.iter().collect();
    for e in run_episodes(suite, &all, 1, Actor::Oracle, 0, base.seed)? {
        let t = &e.trajectory;
        texts.push(t.instruction.clone());
        texts.push(t.final_obs.clone());
        texts.push(mask_json_values(&t.final_obs));
        for turn in &t.turns {
            texts.push(turn.obs.clone());
            texts.push(turn.action.clone());
        }
    }
    for task in &all {
        let mut rng = rng_for(base.seed, &[0x70c, task.spec.task_id as u64]);
        let state = suite.initial_state(task.spec.task_id)?;
        texts.extend(state.action_space());
        for t in random_play(suite, task, 0.5, &mut rng)? {
            texts.push(gold_text(&t));
            texts.push(t.next);
        }
    }
    for kind in [EnvKind::Gridhouse, EnvKind::Tooldesk] {
        texts.push(policy_prompt("", &[Exchange { obs: "", act: "" }], "", 1));
        texts.push(wm_prompt(kind, "", &[], "", "", 0));
    }
    texts.push(wm_target(""));
    // Environment text occurs both at the start of a span and after
    // whitespace, so register both forms of each leading word.
    let spaced: Vec<String> = texts.iter().map(|t| format!(" {t}")).collect();
    texts.extend(spaced);
    Ok(Vocab::build(&texts))
}

/// Generic documents plus acting and next-state format examples.
pub fn format_corpus(suite: &Suite, base: &BaseConfig, history: usize) -> Result<Vec<SftExample>> {
    let mut data: Vec<SftExample> = base
        .generic_train()
        .into_iter()
        .map(|d| SftExample::new("", d))
        .collect();
    let mut pool = Vec::new();
    for task in suite.tasks_in(Split::Train) {
        for i in 0..base.plays_per_task {
            let mut rng = rng_for(base.seed, &[0xf0a, task.spec.task_id as u64, i as u64]);
            pool.extend(random_play(suite, task, base.valid_action_prob, &mut rng)?);
        }
    }
    if pool.is_empty() {
        return Ok(data);
    }
    let targets: Vec<String> = pool
        .iter()
        .map(gold_text)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rng = rng_for(base.seed, &[0xf0b]);
    for _ in 0..base.policy_examples {
        let t = pool.choose(&mut rng).unwrap();
        let actions = if rng.gen_bool(base.valid_action_prob) {
            t.state.candidate_actions()
        } else {
            t.state.action_space()
        };
        let action = actions.choose(&mut rng).cloned().unwrap_or_default();
        data.push(SftExample::new(
            policy_prompt(&t.instruction, &exchanges(&t.history), &t.obs, history),
            policy_target(&action),
        ));
    }
    for _ in 0..base.wm_examples {
        let t = pool.choose(&mut rng).unwrap();
        let target = targets.choose(&mut rng).unwrap();
        data.push(SftExample::new(
            wm_prompt(
                t.state.kind(),
                &t.instruction,
                &exchanges(&t.history),
                &t.obs,
                &t.action,
                history,
            ),
            wm_target(target),
        ));
    }
    Ok(data)
}

/// Supervised pretraining on [`format_corpus`].
pub fn pretrain(model: &Model, suite: &Suite, base: &BaseConfig, cfg: &TrainConfig) -> Result<TrainOutput> {
    let data = format_corpus(suite, base, cfg.history)?;
    sft_train(model, &data, cfg)
}
