//! Episode execution for model, oracle and random actors.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envsim::{EnvKind, Suite, TaskDef};
use crate::error::Result;
use crate::lm::{Model, TokenSeq, EOS};
use crate::prompts::{parse_action, policy_prompt, Exchange};
use crate::reward::StateKind;
use crate::util::{rng_for, Rng};

/// One agent turn and the environment's response to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub obs: String,
    pub action: String,
    pub valid: bool,
    /// Who produced the observation that followed this action.
    pub kind: StateKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: u32,
    pub seed: u64,
    pub env_kind: EnvKind,
    pub instruction: String,
    pub turns: Vec<Turn>,
    pub final_obs: String,
    pub success: bool,
}

impl Trajectory {
    pub fn exchanges(&self) -> Vec<Exchange<'_>> {
        self.turns
            .iter()
            .map(|t| Exchange {
                obs: &t.obs,
                act: &t.action,
            })
            .collect()
    }

    /// Observation that followed turn `t`.
    pub fn next_obs(&self, t: usize) -> &str {
        self.turns
            .get(t + 1)
            .map(|n| n.obs.as_str())
            .unwrap_or(&self.final_obs)
    }
}

/// Token-level record of a sampled action, kept for policy-gradient updates.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    pub prompt: TokenSeq,
    pub completion: TokenSeq,
    pub logprobs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub trajectory: Trajectory,
    /// Parallel to `trajectory.turns`; empty for non-model actors.
    pub samples: Vec<ActionSample>,
}

#[derive(Debug, Clone, Copy)]
pub enum Actor<'a> {
    Model {
        model: &'a Model,
        temperature: f64,
        max_new_tokens: usize,
    },
    Oracle,
    Random,
}

impl<'a> Actor<'a> {
    pub fn greedy(model: &'a Model, max_new_tokens: usize) -> Self {
        Actor::Model {
            model,
            temperature: 0.0,
            max_new_tokens,
        }
    }
}

pub fn run_episode(
    suite: &Suite,
    task: &TaskDef,
    actor: Actor,
    history: usize,
    rng: &mut Rng,
) -> Result<Episode> {
    let (mut state, _) = suite.reset(&task.spec)?;
    let instruction = state.instruction();
    let mut obs = state.initial_observation();
    let plan = match actor {
        Actor::Oracle => suite.solve_oracle(task.spec.task_id)?,
        _ => Vec::new(),
    };
    let mut turns: Vec<Turn> = Vec::new();
    let mut samples = Vec::new();
    let mut success = false;
    while !state.is_terminal() {
        let action = match actor {
            Actor::Model {
                model,
                temperature,
                max_new_tokens,
            } => {
                let hist: Vec<Exchange> = turns
                    .iter()
                    .map(|t| Exchange {
                        obs: &t.obs,
                        act: &t.action,
                    })
                    .collect();
                let prompt = model
                    .vocab
                    .encode(&policy_prompt(&instruction, &hist, &obs, history));
                let (completion, logprobs) =
                    model
                        .params
                        .sample(&prompt, temperature, max_new_tokens, EOS, rng);
                let action = parse_action(&model.vocab.decode(&completion));
                samples.push(ActionSample {
                    prompt,
                    completion,
                    logprobs,
                });
                action
            }
            Actor::Oracle => plan
                .get(turns.len())
                .cloned()
                .unwrap_or_else(|| "look".to_string()),
            Actor::Random => state
                .candidate_actions()
                .choose(rng)
                .cloned()
                .unwrap_or_default(),
        };
        let out = state.step(&action)?;
        turns.push(Turn {
            obs: std::mem::replace(&mut obs, out.observation),
            action,
            valid: out.valid,
            kind: out.kind,
        });
        success = out.success;
        state = out.state;
    }
    Ok(Episode {
        trajectory: Trajectory {
            task_id: task.spec.task_id,
            seed: task.spec.seed,
            env_kind: task.spec.env_kind,
            instruction,
            turns,
            final_obs: obs,
            success,
        },
        samples,
    })
}

/// `per_task` episodes for each listed task. Unit `(task, i)` draws from its
/// own RNG stream, so results do not depend on the thread count.
pub fn run_episodes(
    suite: &Suite,
    tasks: &[&TaskDef],
    per_task: usize,
    actor: Actor,
    history: usize,
    seed: u64,
) -> Result<Vec<Episode>> {
    let units: Vec<(&TaskDef, usize)> = tasks
        .iter()
        .flat_map(|t| (0..per_task).map(move |i| (*t, i)))
        .collect();
    units
        .par_iter()
        .map(|(task, i)| {
            let mut rng = rng_for(seed, &[task.spec.task_id as u64, *i as u64]);
            run_episode(suite, task, actor, history, &mut rng)
        })
        .collect()
}
