//! Evaluation and diagnostics.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datapipe::Triplet;
use crate::envsim::{is_inefficient_action, Split, Suite, TaskDef};
use crate::error::{Result, WmError};
use crate::lm::{Model, Params, EOS, TENSOR_NAMES};
use crate::reward::{score_prediction, RewardSpec};
use crate::rollout::{run_episodes, Actor, Trajectory};
use crate::util::{mean_std, rng_for, stream_seed};

pub const DEFAULT_ETA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        let (mean, std) = mean_std(xs);
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub suite: String,
    pub runs: usize,
    /// Over all evaluation tasks; mean and std of the per-run rates.
    pub success_rate: MeanStd,
    pub id: MeanStd,
    pub ood: MeanStd,
    /// Successful tasks per run, split by in-distribution and OOD.
    pub id_successes: Vec<usize>,
    pub ood_successes: Vec<usize>,
    pub invalid_action_rate: f64,
    pub inefficient_action_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wm_heldout_reward: Option<f64>,
}

/// Rollouts on every evaluation task, repeated `runs` times with distinct
/// seeds. Model actors act greedily.
pub fn evaluate_success(
    suite: &Suite,
    actor: Actor,
    runs: usize,
    history: usize,
    seed: u64,
) -> Result<(EvalReport, Vec<Trajectory>)> {
    let tasks: Vec<&TaskDef> = suite
        .tasks_in(Split::IdEval)
        .chain(suite.tasks_in(Split::OodEval))
        .collect();
    let actor = match actor {
        Actor::Model {
            model,
            max_new_tokens,
            ..
        } => Actor::greedy(model, max_new_tokens),
        other => other,
    };
    let mut all = Vec::new();
    let (mut overall, mut id, mut ood) = (Vec::new(), Vec::new(), Vec::new());
    let (mut id_n, mut ood_n) = (Vec::new(), Vec::new());
    for run in 0..runs {
        let eps = run_episodes(suite, &tasks, 1, actor, history, stream_seed(seed, &[run as u64]))?;
        let count = |split: Split| {
            let hits = tasks
                .iter()
                .zip(&eps)
                .filter(|(t, e)| t.spec.split == split && e.trajectory.success)
                .count();
            let n = tasks.iter().filter(|t| t.spec.split == split).count();
            (hits, if n == 0 { 0.0 } else { hits as f64 / n as f64 })
        };
        let (ih, ir) = count(Split::IdEval);
        let (oh, or) = count(Split::OodEval);
        id.push(ir);
        ood.push(or);
        id_n.push(ih);
        ood_n.push(oh);
        overall.push((ih + oh) as f64 / tasks.len().max(1) as f64);
        all.extend(eps.into_iter().map(|e| e.trajectory));
    }
    let report = EvalReport {
        suite: suite.name.clone(),
        runs,
        success_rate: MeanStd::of(&overall),
        id: MeanStd::of(&id),
        ood: MeanStd::of(&ood),
        id_successes: id_n,
        ood_successes: ood_n,
        invalid_action_rate: invalid_action_rate(&all),
        inefficient_action_rate: inefficient_action_rate(&all),
        wm_heldout_reward: None,
    };
    Ok((report, all))
}

/// Mean reward of greedy next-state predictions.
pub fn wm_eval(model: &Model, triplets: &[Triplet], spec: &RewardSpec, history: usize, max_new_tokens: usize) -> Result<f64> {
    if triplets.is_empty() {
        return Err(WmError::EmptyDataset("held-out triplets".into()));
    }
    let rewards: Vec<f64> = triplets
        .par_iter()
        .map(|t| {
            let prompt = model.vocab.encode(&t.prompt(history));
            let (c, _) = model
                .params
                .sample(&prompt, 0.0, max_new_tokens, EOS, &mut rng_for(0, &[]));
            score_prediction(&model.vocab.decode(&c), &t.gold, t.kind, spec).value
        })
        .collect();
    Ok(rewards.iter().sum::<f64>() / rewards.len() as f64)
}

/// Fraction of steps the environment rejected.
pub fn invalid_action_rate(trajectories: &[Trajectory]) -> f64 {
    let (bad, total) = trajectories.iter().flat_map(|t| &t.turns).fold((0, 0), |(b, n), turn| {
        (b + (!turn.valid) as usize, n + 1)
    });
    if total == 0 {
        0.0
    } else {
        bad as f64 / total as f64
    }
}

/// Fraction of steps that were valid but only gathered information.
pub fn inefficient_action_rate(trajectories: &[Trajectory]) -> f64 {
    let (hits, total) = trajectories.iter().fold((0, 0), |(h, n), t| {
        let k = t
            .turns
            .iter()
            .filter(|turn| turn.valid && is_inefficient_action(t.env_kind, &turn.action))
            .count();
        (h + k, n + t.turns.len())
    });
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEntry {
    pub major: usize,
    /// Pairs where both values are finite and non-zero.
    pub counted: usize,
    pub ratio: f64,
}

impl RatioEntry {
    fn new(major: usize, counted: usize) -> Self {
        Self {
            major,
            counted,
            ratio: if counted == 0 { 0.0 } else { major as f64 / counted as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightChangeReport {
    pub eta: f64,
    pub tensors: BTreeMap<String, RatioEntry>,
    /// Grouped by component: embedding, hidden, output.
    pub layers: BTreeMap<String, RatioEntry>,
    pub total: RatioEntry,
}

pub fn is_major_update(before: f64, after: f64, eta: f64) -> bool {
    (after - before).abs() > eta * before.abs().max(after.abs())
}

pub fn weight_change_ratios(before: &Params, after: &Params, eta: f64) -> Result<WeightChangeReport> {
    if before.dims() != after.dims() {
        return Err(WmError::ShapeError(format!(
            "cannot compare {:?} with {:?}",
            before.dims(),
            after.dims()
        )));
    }
    let mut tensors = BTreeMap::new();
    let mut layers: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let (mut major, mut counted) = (0, 0);
    for ((name, a), (_, b)) in before.weights.tensors().into_iter().zip(after.weights.tensors()) {
        let (mut m, mut c) = (0, 0);
        for (x, y) in a.iter().zip(b) {
            if x.is_finite() && y.is_finite() && *x != 0.0 && *y != 0.0 {
                c += 1;
                m += is_major_update(*x, *y, eta) as usize;
            }
        }
        let layer = name.split('.').next().unwrap_or(name).to_string();
        let e = layers.entry(layer).or_default();
        e.0 += m;
        e.1 += c;
        major += m;
        counted += c;
        tensors.insert(name.to_string(), RatioEntry::new(m, c));
    }
    debug_assert_eq!(tensors.len(), TENSOR_NAMES.len());
    Ok(WeightChangeReport {
        eta,
        tensors,
        layers: layers
            .into_iter()
            .map(|(k, (m, c))| (k, RatioEntry::new(m, c)))
            .collect(),
        total: RatioEntry::new(major, counted),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForgettingReport {
    pub ppl_before: f64,
    pub ppl_after: f64,
    pub delta: f64,
}

/// Token-level perplexity of plain documents (each scored from BOS, EOS
/// included).
pub fn perplexity(model: &Model, corpus: &[String]) -> Result<f64> {
    let parts: Vec<(f64, usize)> = corpus
        .par_iter()
        .map(|doc| {
            let mut ids = model.vocab.encode(doc);
            ids.push(EOS);
            model.params.nll(&[], &ids)
        })
        .collect::<Result<_>>()?;
    let (nll, n) = parts.iter().fold((0.0, 0), |(a, b), (l, k)| (a + l, b + k));
    if n == 0 {
        return Err(WmError::EmptyDataset("held-out corpus".into()));
    }
    Ok((nll / n as f64).exp())
}

pub fn forgetting_proxy(before: &Model, after: &Model, corpus: &[String]) -> Result<ForgettingReport> {
    if before.vocab != after.vocab {
        return Err(WmError::ShapeError("models use different vocabularies".into()));
    }
    let ppl_before = perplexity(before, corpus)?;
    let ppl_after = perplexity(after, corpus)?;
    Ok(ForgettingReport {
        ppl_before,
        ppl_after,
        delta: ppl_after - ppl_before,
    })
}

/// `step,metric,value` rows for external plotting.
pub fn write_plot_csv(path: &Path, series: &[(String, Vec<(usize, f64)>)]) -> Result<()> {
    let mut s = String::from("step,metric,value\n");
    for (name, points) in series {
        for (step, v) in points {
            s.push_str(&format!("{step},{name},{v}\n"));
        }
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::SuiteConfig;
    use crate::lm::{LmConfig, Vocab};
    use crate::rollout::Turn;
    use crate::reward::StateKind;
    use crate::envsim::EnvKind;

    fn traj(valid: &[bool]) -> Trajectory {
        Trajectory {
            task_id: 0,
            seed: 0,
            env_kind: EnvKind::Gridhouse,
            instruction: String::new(),
            turns: valid
                .iter()
                .map(|v| Turn {
                    obs: "o".into(),
                    action: "look".into(),
                    valid: *v,
                    kind: StateKind::Text,
                })
                .collect(),
            final_obs: String::new(),
            success: false,
        }
    }

    #[test]
    fn invalid_rate_arithmetic() {
        let mut flags = vec![true; 10];
        flags[2] = false;
        flags[7] = false;
        assert_eq!(invalid_action_rate(&[traj(&flags)]), 0.2);
        let a = [traj(&[true, false]), traj(&[true, true, true])];
        let b = [a[1].clone(), a[0].clone()];
        assert_eq!(invalid_action_rate(&a), invalid_action_rate(&b));
        assert_eq!(invalid_action_rate(&[]), 0.0);
        assert_eq!(inefficient_action_rate(&[traj(&[true, false])]), 0.5);
    }

    #[test]
    fn major_update_predicate() {
        assert!(is_major_update(1.0, 1.1, 1e-3));
        assert!(!is_major_update(1.0, 1.0005, 1e-3));
    }

    #[test]
    fn weight_change_identity_and_shape() {
        let v = Vocab::build(&["a b c"]);
        let cfg = LmConfig {
            context: 2,
            embed: 3,
            hidden: 4,
            seed: 3,
        };
        let m = cfg.init(v.clone());
        let r = weight_change_ratios(&m.params, &m.params, 1e-3).unwrap();
        assert!(r.tensors.values().all(|e| e.ratio == 0.0));
        assert_eq!(r.layers.len(), 3);
        let other = LmConfig { hidden: 5, ..cfg }.init(v);
        assert!(matches!(
            weight_change_ratios(&m.params, &other.params, 1e-3),
            Err(WmError::ShapeError(_))
        ));
    }

    #[test]
    fn oracle_evaluation_is_perfect() {
        let suite = Suite::generate(&SuiteConfig::gridhouse_small(2)).unwrap();
        let (r, trajs) = evaluate_success(&suite, Actor::Oracle, 3, 4, 1).unwrap();
        assert_eq!(r.success_rate.mean, 1.0);
        assert_eq!(r.success_rate.std, 0.0);
        assert_eq!(r.invalid_action_rate, 0.0);
        assert_eq!(trajs.len(), 3 * 20);
    }

    #[test]
    fn identical_models_do_not_forget() {
        let m = LmConfig {
            context: 3,
            embed: 4,
            hidden: 5,
            seed: 1,
        }
        .init(Vocab::build(&["the cat sees the bird ."]));
        let corpus = vec!["the cat sees the bird.".to_string()];
        let f = forgetting_proxy(&m, &m, &corpus).unwrap();
        assert_eq!(f.delta, 0.0);
        let ids = m.vocab.encode(&corpus[0]);
        let mut all = ids.clone();
        all.push(EOS);
        let lp = m.params.logprob(&[], &all).unwrap();
        let expect = (-lp.iter().sum::<f64>() / lp.len() as f64).exp();
        assert!((f.ppl_before - expect).abs() < 1e-12);
    }
}
