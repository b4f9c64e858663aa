use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;

use super::grpo::{group_advantages, grpo_step, propagate_reward, update_from_samples, PgSample};
use super::sft::{sft_train, SftExample};
use super::{StepMetrics, TrainConfig, TrainOutput};
use crate::datapipe::Triplet;
use crate::envsim::{Split, Suite, TaskDef};
use crate::error::{Result, WmError};
use crate::lm::{Adam, AdamConfig, Model, TokenSeq};
use crate::prompts::{policy_prompt, policy_target};
use crate::reward::{score_prediction, task_reward};
use crate::rollout::{run_episodes, Actor, Episode, Trajectory};
use crate::util::{rng_for, stream_seed};

fn pick_batch(n: usize, batch: usize, seed: u64, step: usize) -> Vec<usize> {
    let mut idx = sample_indices(&mut rng_for(seed, &[0xba7c, step as u64]), n, batch.min(n)).into_vec();
    idx.sort_unstable();
    idx
}

/// Next-state prediction trained with GRPO against the sim-to-real reward.
/// The sampling policy is refreshed every step and the KL reference is the
/// input model.
pub fn wmrl_train(model: &Model, triplets: &[Triplet], cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    if triplets.is_empty() {
        return Err(WmError::EmptyDataset("world-model triplets".into()));
    }
    let prompts: Vec<TokenSeq> = triplets
        .iter()
        .map(|t| model.vocab.encode(&t.prompt(cfg.history)))
        .collect();
    let reference = model.params.snapshot();
    let mut live = model.clone();
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr), live.params.dims());
    let mut metrics = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = pick_batch(triplets.len(), cfg.batch_size, cfg.seed, step);
        let batch_prompts: Vec<TokenSeq> = batch.iter().map(|&i| prompts[i].clone()).collect();
        let old = live.params.snapshot();
        let vocab = &live.vocab;
        let reward_fn = |i: usize, completion: &[u32]| {
            let t = &triplets[batch[i]];
            score_prediction(&vocab.decode(completion), &t.gold, t.kind, &cfg.reward).value
        };
        let (stats, _) = grpo_step(
            &mut live.params,
            &mut opt,
            &old,
            &reference,
            &batch_prompts,
            cfg,
            reward_fn,
            stream_seed(cfg.seed, &[0x3a1, step as u64]),
        )?;
        metrics.push(StepMetrics {
            step,
            mean_reward: Some(stats.mean_reward),
            kl: Some(stats.kl),
            clip_frac: Some(stats.clip_frac),
            loss: stats.loss,
        });
    }
    Ok(TrainOutput {
        model: live,
        metrics,
        dataset_size: triplets.len(),
    })
}

/// Supervised next-state prediction on the gold observations.
pub fn wm_sft_train(model: &Model, triplets: &[Triplet], cfg: &TrainConfig) -> Result<TrainOutput> {
    let data: Vec<SftExample> = triplets.iter().map(|t| t.sft_example(cfg.history)).collect();
    sft_train(model, &data, cfg)
}

/// (policy prompt, action) pairs for every turn of the given trajectories.
pub fn action_examples<'a>(trajs: impl IntoIterator<Item = &'a Trajectory>, history: usize) -> Vec<SftExample> {
    let mut out = Vec::new();
    for traj in trajs {
        let ex = traj.exchanges();
        for (t, turn) in traj.turns.iter().enumerate() {
            out.push(SftExample::new(
                policy_prompt(&traj.instruction, &ex[..t], &turn.obs, history),
                policy_target(&turn.action),
            ));
        }
    }
    out
}

/// GRPO on terminal task success, propagated to every action turn.
/// Advantages are standardized across the episodes of each task.
pub fn policy_rl_train(model: &Model, suite: &Suite, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let tasks: Vec<&TaskDef> = suite.tasks_in(Split::Train).collect();
    if tasks.is_empty() {
        return Err(WmError::EmptyDataset("train tasks".into()));
    }
    let reference = model.params.snapshot();
    let mut live = model.clone();
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr), live.params.dims());
    let mut metrics = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch: Vec<&TaskDef> = pick_batch(tasks.len(), cfg.batch_size, cfg.seed, step)
            .into_iter()
            .map(|i| tasks[i])
            .collect();
        let old = live.clone();
        let actor = Actor::Model {
            model: &old,
            temperature: cfg.temperature,
            max_new_tokens: cfg.max_new_tokens,
        };
        let episodes = run_episodes(
            suite,
            &batch,
            cfg.group_size,
            actor,
            cfg.history,
            stream_seed(cfg.seed, &[0x9071, step as u64]),
        )?;
        let mut samples = Vec::new();
        let mut successes = 0.0;
        for group in episodes.chunks(cfg.group_size) {
            let returns: Vec<f64> = group.iter().map(|e| task_reward(e.trajectory.success)).collect();
            successes += returns.iter().sum::<f64>();
            let adv = group_advantages(&returns)?;
            for (e, a) in group.iter().zip(adv) {
                let scale = propagate_reward(1.0, e.samples.len(), cfg.gamma);
                for (s, w) in e.samples.iter().zip(scale) {
                    samples.push((s, a * w));
                }
            }
        }
        let samples: Vec<PgSample> = samples
            .par_iter()
            .map(|(s, a)| {
                Ok(PgSample {
                    ref_logprobs: reference.logprob(&s.prompt, &s.completion)?,
                    prompt: s.prompt.clone(),
                    completion: s.completion.clone(),
                    advantage: *a,
                    old_logprobs: s.logprobs.clone(),
                })
            })
            .collect::<Result<_>>()?;
        let stats = update_from_samples(&mut live.params, &mut opt, &samples, cfg)?;
        metrics.push(StepMetrics {
            step,
            mean_reward: Some(successes / episodes.len().max(1) as f64),
            kl: Some(stats.kl),
            clip_frac: Some(stats.clip_frac),
            loss: stats.loss,
        });
    }
    Ok(TrainOutput {
        model: live,
        metrics,
        dataset_size: tasks.len(),
    })
}

/// Supervised training on the model's own successful episodes.
pub fn rft_train(model: &Model, suite: &Suite, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let tasks: Vec<&TaskDef> = suite.tasks_in(Split::Train).collect();
    let actor = Actor::Model {
        model,
        temperature: cfg.temperature,
        max_new_tokens: cfg.max_new_tokens,
    };
    let episodes = run_episodes(suite, &tasks, cfg.rollouts_per_task, actor, cfg.history, cfg.seed)?;
    let kept: Vec<&Trajectory> = successful(&episodes).collect();
    if kept.is_empty() {
        log::warn!("no successful episodes among {}; model left unchanged", episodes.len());
        return Err(WmError::EmptyDataset("successful trajectories".into()));
    }
    sft_train(model, &action_examples(kept, cfg.history), cfg)
}

pub fn successful(episodes: &[Episode]) -> impl Iterator<Item = &Trajectory> {
    episodes.iter().map(|e| &e.trajectory).filter(|t| t.success)
}

/// Supervised training on scripted-expert episodes.
pub fn distill_train(model: &Model, suite: &Suite, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let tasks: Vec<&TaskDef> = suite.tasks_in(Split::Train).collect();
    let episodes = run_episodes(suite, &tasks, 1, Actor::Oracle, cfg.history, cfg.seed)?;
    let data = action_examples(episodes.iter().map(|e| &e.trajectory), cfg.history);
    sft_train(model, &data, cfg)
}
