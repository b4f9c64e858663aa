//! Group-relative policy optimization.
//!
//! Objective per completion token, averaged over all tokens in the batch:
//! `min(r * A, clip(r, 1 - eps, 1 + eps) * A) - beta * kl`, where `r` is the
//! probability ratio against the sampling policy and
//! `kl = exp(d) - d - 1` with `d = logp_ref - logp`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Result, WmError};
use crate::lm::{Adam, Params, TokenSeq, Weights, EOS};
use crate::util::{mean_std, rng_for};

/// Standardize rewards within a group using the population std. A group
/// with zero spread carries no signal and gets all-zero advantages.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(WmError::GroupTooSmall(rewards.len()));
    }
    let (mean, std) = mean_std(rewards);
    if rewards.iter().all(|r| *r == rewards[0]) || !std.is_finite() {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Per-turn rewards when only the last of `n_turns` turns is rewarded.
pub fn propagate_reward(terminal: f64, n_turns: usize, gamma: f64) -> Vec<f64> {
    (0..n_turns)
        .map(|t| terminal * gamma.powi((n_turns - 1 - t) as i32))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBatch {
    pub prompt: TokenSeq,
    pub completions: Vec<TokenSeq>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub old_logprobs: Vec<Vec<f64>>,
    pub ref_logprobs: Vec<Vec<f64>>,
}

impl GroupBatch {
    pub fn samples(&self) -> Vec<PgSample> {
        (0..self.completions.len())
            .map(|i| PgSample {
                prompt: self.prompt.clone(),
                completion: self.completions[i].clone(),
                advantage: self.advantages[i],
                old_logprobs: self.old_logprobs[i].clone(),
                ref_logprobs: self.ref_logprobs[i].clone(),
            })
            .collect()
    }
}

/// One scored completion with everything the update needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PgSample {
    pub prompt: TokenSeq,
    pub completion: TokenSeq,
    pub advantage: f64,
    pub old_logprobs: Vec<f64>,
    pub ref_logprobs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GrpoStats {
    pub mean_reward: f64,
    pub kl: f64,
    pub clip_frac: f64,
    /// Negated objective.
    pub loss: f64,
    pub tokens: usize,
}

struct TokenTerms {
    objective: f64,
    weight: f64,
    kl: f64,
    clipped: bool,
}

fn token_terms(logp: f64, old: f64, reference: f64, adv: f64, eps: f64, beta: f64) -> TokenTerms {
    let ratio = (logp - old).exp();
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
    let d = reference - logp;
    let kl = d.exp() - d - 1.0;
    let use_unclipped = unclipped <= clipped;
    TokenTerms {
        objective: unclipped.min(clipped) - beta * kl,
        weight: if use_unclipped { unclipped } else { 0.0 } + beta * (d.exp() - 1.0),
        kl,
        clipped: !use_unclipped,
    }
}

fn sample_terms(params: &Params, s: &PgSample, eps: f64, beta: f64) -> Result<Vec<TokenTerms>> {
    let n = s.completion.len();
    if s.old_logprobs.len() != n || s.ref_logprobs.len() != n {
        return Err(WmError::ShapeError(format!(
            "completion of {n} tokens with {} old and {} reference log-probs",
            s.old_logprobs.len(),
            s.ref_logprobs.len()
        )));
    }
    let lp = params.logprob(&s.prompt, &s.completion)?;
    Ok((0..n)
        .map(|t| token_terms(lp[t], s.old_logprobs[t], s.ref_logprobs[t], s.advantage, eps, beta))
        .collect())
}

fn finish_stats(obj: f64, kl: f64, clipped: usize, ntok: usize) -> Result<GrpoStats> {
    let n = ntok.max(1) as f64;
    let stats = GrpoStats {
        mean_reward: 0.0,
        kl: kl / n,
        clip_frac: clipped as f64 / n,
        loss: -obj / n,
        tokens: ntok,
    };
    if !stats.loss.is_finite() {
        return Err(WmError::NumericalError("non-finite policy objective".into()));
    }
    Ok(stats)
}

/// Token-averaged clipped surrogate minus the KL penalty.
pub fn grpo_objective(params: &Params, samples: &[PgSample], eps: f64, beta: f64) -> Result<(f64, GrpoStats)> {
    let mut obj = 0.0;
    let mut kl = 0.0;
    let mut clipped = 0;
    let mut ntok = 0;
    for s in samples {
        for t in sample_terms(params, s, eps, beta)? {
            obj += t.objective;
            kl += t.kl;
            clipped += t.clipped as usize;
            ntok += 1;
        }
    }
    let stats = finish_stats(obj, kl, clipped, ntok)?;
    Ok((-stats.loss, stats))
}

/// Gradient of [`grpo_objective`] with respect to the parameters.
pub fn grpo_gradient(params: &Params, samples: &[PgSample], eps: f64, beta: f64) -> Result<(Weights, GrpoStats)> {
    let parts: Vec<(Weights, f64, f64, usize, usize)> = samples
        .par_iter()
        .map(|s| {
            let terms = sample_terms(params, s, eps, beta)?;
            let weights: Vec<f64> = terms.iter().map(|t| t.weight).collect();
            let g = params.grad_logprob(&s.prompt, &s.completion, &weights)?;
            Ok((
                g,
                terms.iter().map(|t| t.objective).sum(),
                terms.iter().map(|t| t.kl).sum(),
                terms.iter().filter(|t| t.clipped).count(),
                terms.len(),
            ))
        })
        .collect::<Result<_>>()?;
    let mut grad = Weights::zeros(params.dims());
    let (mut obj, mut kl, mut clipped, mut ntok) = (0.0, 0.0, 0, 0);
    for (g, o, k, c, n) in &parts {
        grad.add_scaled(g, 1.0);
        obj += o;
        kl += k;
        clipped += c;
        ntok += n;
    }
    grad.scale(1.0 / ntok.max(1) as f64);
    Ok((grad, finish_stats(obj, kl, clipped, ntok)?))
}

/// One optimizer step ascending the objective over `samples`. Nothing is
/// modified when the objective or gradient is not finite.
pub fn update_from_samples(
    params: &mut Params,
    opt: &mut Adam,
    samples: &[PgSample],
    cfg: &TrainConfig,
) -> Result<GrpoStats> {
    let (grad, stats) = grpo_gradient(params, samples, cfg.clip_eps, cfg.kl_coef)?;
    opt.step(&mut params.weights, &grad)?;
    Ok(stats)
}

/// Sample a group per prompt from `old`, score it, and take one step.
///
/// `reward_fn(prompt_index, completion)` scores a sampled completion.
/// The returned stats carry the mean reward over all completions.
#[allow(clippy::too_many_arguments)]
pub fn grpo_step<F>(
    params: &mut Params,
    opt: &mut Adam,
    old: &Params,
    reference: &Params,
    prompts: &[TokenSeq],
    cfg: &TrainConfig,
    reward_fn: F,
    seed: u64,
) -> Result<(GrpoStats, Vec<GroupBatch>)>
where
    F: Fn(usize, &[u32]) -> f64 + Sync,
{
    let groups: Vec<GroupBatch> = prompts
        .par_iter()
        .enumerate()
        .map(|(i, prompt)| {
            let mut rng = rng_for(seed, &[0x9e0, i as u64]);
            let mut completions = Vec::with_capacity(cfg.group_size);
            let mut old_logprobs = Vec::with_capacity(cfg.group_size);
            for _ in 0..cfg.group_size {
                let (c, lp) = old.sample(prompt, cfg.temperature, cfg.max_new_tokens, EOS, &mut rng);
                completions.push(c);
                old_logprobs.push(lp);
            }
            let rewards: Vec<f64> = completions.iter().map(|c| reward_fn(i, c)).collect();
            let advantages = group_advantages(&rewards)?;
            let ref_logprobs = completions
                .iter()
                .map(|c| reference.logprob(prompt, c))
                .collect::<Result<_>>()?;
            Ok(GroupBatch {
                prompt: prompt.clone(),
                completions,
                rewards,
                advantages,
                old_logprobs,
                ref_logprobs,
            })
        })
        .collect::<Result<_>>()?;
    let samples: Vec<PgSample> = groups.iter().flat_map(GroupBatch::samples).collect();
    let mut stats = update_from_samples(params, opt, &samples, cfg)?;
    let all: Vec<f64> = groups.iter().flat_map(|g| g.rewards.iter().copied()).collect();
    stats.mean_reward = all.iter().sum::<f64>() / all.len().max(1) as f64;
    Ok((stats, groups))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{AdamConfig, Vocab};
    use proptest::prelude::*;

    #[test]
    fn advantage_examples() {
        assert_eq!(group_advantages(&[1.0, 0.0]).unwrap(), vec![1.0, -1.0]);
        assert_eq!(group_advantages(&[1.0; 4]).unwrap(), vec![0.0; 4]);
        assert_eq!(
            group_advantages(&[1.0, 0.0, 0.0, 1.0]).unwrap(),
            vec![1.0, -1.0, -1.0, 1.0]
        );
        assert!(matches!(group_advantages(&[1.0]), Err(WmError::GroupTooSmall(1))));
    }

    #[test]
    fn reward_propagation() {
        assert_eq!(propagate_reward(1.0, 5, 1.0), vec![1.0; 5]);
        assert_eq!(propagate_reward(1.0, 3, 0.5), vec![0.25, 0.5, 1.0]);
        assert_eq!(propagate_reward(0.0, 2, 0.9), vec![0.0, 0.0]);
    }

    fn tiny() -> (Vocab, Params) {
        let v = Vocab::build(&["a b c d e f"]);
        let p = Params::init(&v, 3, 2, 4, 5);
        (v, p)
    }

    fn sample_at(p: &Params, reference: &Params, adv: f64) -> PgSample {
        let prompt = vec![8, 9];
        let completion = vec![10, 11, EOS];
        PgSample {
            old_logprobs: p.logprob(&prompt, &completion).unwrap(),
            ref_logprobs: reference.logprob(&prompt, &completion).unwrap(),
            prompt,
            completion,
            advantage: adv,
        }
    }

    #[test]
    fn zero_advantage_without_kl_is_a_fixed_point() {
        let (_, p) = tiny();
        let s = sample_at(&p, &p, 0.0);
        let (g, stats) = grpo_gradient(&p, &[s.clone()], 0.2, 0.0).unwrap();
        assert_eq!(g.l2_norm(), 0.0);
        assert_eq!(stats.kl, 0.0);
        let mut q = p.clone();
        let mut opt = Adam::new(AdamConfig::default(), p.dims());
        let cfg = TrainConfig {
            kl_coef: 0.0,
            ..Default::default()
        };
        update_from_samples(&mut q, &mut opt, &[s], &cfg).unwrap();
        assert_eq!(q, p);
    }

    #[test]
    fn on_policy_gradient_is_vanilla_policy_gradient() {
        let (_, p) = tiny();
        let s = sample_at(&p, &p, 0.7);
        let (g, stats) = grpo_gradient(&p, &[s.clone()], 0.2, 0.01).unwrap();
        assert_eq!(stats.clip_frac, 0.0);
        let n = s.completion.len() as f64;
        let vanilla = p
            .grad_logprob(&s.prompt, &s.completion, &vec![0.7 / n; s.completion.len()])
            .unwrap();
        let mut diff = g;
        diff.add_scaled(&vanilla, -1.0);
        assert!(diff.l2_norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn token_terms_bounded(logp in -8.0f64..0.0, old in -8.0f64..0.0, reference in -8.0f64..0.0,
                               adv in -3.0f64..3.0, eps in 0.05f64..0.5) {
            let t = token_terms(logp, old, reference, adv, eps, 0.0);
            if adv >= 0.0 {
                prop_assert!(t.objective >= 0.0 && t.objective <= adv * (1.0 + eps) + 1e-12);
            } else {
                // The pessimistic bound is one-sided for negative advantages.
                prop_assert!(t.objective <= adv * (1.0 - eps) + 1e-12);
            }
            let with_kl = token_terms(logp, old, reference, adv, eps, 1.0);
            prop_assert!(with_kl.kl >= 0.0);
        }
    }
}
