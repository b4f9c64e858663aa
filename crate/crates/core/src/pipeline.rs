//! End-to-end world-model RL run built from a [`RunConfig`]: base model,
//! rollout data, curated triplets, WMRL, downstream policy RL, evaluation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::{evaluate_success, weight_change_ratios, wm_eval, EvalReport};
use crate::config::RunConfig;
use crate::datapipe::{
    collect_rollouts, score_triplets, split_dataset, subsample_easy, to_triplets, train_filter_model, Triplet,
};
use crate::envsim::{Split, Suite, TaskDef};
use crate::error::Result;
use crate::lm::Model;
use crate::rollout::{run_episodes, Actor, Trajectory};
use crate::trainer::{build_vocab, policy_rl_train, pretrain, wmrl_train, TrainOutput};
use crate::util::stream_seed;

pub fn build_suite(cfg: &RunConfig) -> Result<Suite> {
    Suite::generate(&cfg.suite_config())
}

/// Fresh vocabulary and weights, then supervised pretraining.
pub fn build_base(cfg: &RunConfig, suite: &Suite) -> Result<TrainOutput> {
    let base = cfg.base_config();
    let vocab = build_vocab(suite, &base)?;
    let init = cfg.lm_config().init(vocab);
    pretrain(&init, suite, &base, &cfg.stage_config("pretrain")?)
}

/// Sampled episodes of `model` on the evaluation tasks; never used for
/// training.
pub fn heldout_trajectories(cfg: &RunConfig, suite: &Suite, model: &Model) -> Result<Vec<Trajectory>> {
    let p = cfg.pipeline_config();
    let tasks: Vec<&TaskDef> = suite
        .tasks_in(Split::IdEval)
        .chain(suite.tasks_in(Split::OodEval))
        .collect();
    let actor = Actor::Model {
        model,
        temperature: p.temperature,
        max_new_tokens: p.max_new_tokens,
    };
    Ok(
        run_episodes(suite, &tasks, cfg.eval.heldout_rollouts, actor, p.history, stream_seed(p.seed, &[0x4e1d]))?
            .into_iter()
            .map(|e| e.trajectory)
            .collect(),
    )
}

/// Task-success report of greedy play, with the held-out next-state reward
/// attached when `heldout` is non-empty.
pub fn evaluate_model(cfg: &RunConfig, suite: &Suite, model: &Model, heldout: &[Triplet]) -> Result<EvalReport> {
    let history = cfg.pipeline.history;
    let actor = Actor::greedy(model, cfg.eval.max_new_tokens);
    let (mut report, _) = evaluate_success(suite, actor, cfg.eval.runs, history, cfg.eval_seed())?;
    if !heldout.is_empty() {
        let spec = &cfg.stage_config("wmrl")?.reward;
        report.wm_heldout_reward = Some(wm_eval(model, heldout, spec, history, cfg.eval.max_new_tokens)?);
    }
    Ok(report)
}

/// Curated next-state data derived from base-model rollouts.
#[derive(Debug, Clone)]
pub struct CuratedData {
    pub trajectories: Vec<Trajectory>,
    pub triplets: Vec<Triplet>,
    pub train: Vec<Triplet>,
    pub validation: Vec<Triplet>,
    pub filter: TrainOutput,
    pub scored: Vec<Triplet>,
    pub subsampled: Vec<Triplet>,
}

/// Triplets from trajectories, split into (all, train, validation).
pub fn make_triplets(cfg: &RunConfig, trajectories: &[Trajectory]) -> Result<(Vec<Triplet>, Vec<Triplet>, Vec<Triplet>)> {
    let p = cfg.pipeline_config();
    let triplets = to_triplets(trajectories, p.history);
    let (train, validation) = split_dataset(&triplets, p.split_ratio, p.seed)?;
    Ok((triplets, train, validation))
}

pub fn filter_model(cfg: &RunConfig, base: &Model, validation: &[Triplet]) -> Result<TrainOutput> {
    train_filter_model(base, validation, &cfg.stage_config("filter")?)
}

pub fn easy_scores(cfg: &RunConfig, filter: &Model, train: &[Triplet]) -> Result<Vec<Triplet>> {
    score_triplets(filter, train, &cfg.pipeline_config(), &cfg.stage_config("wmrl")?.reward)
}

pub fn subsample(cfg: &RunConfig, scored: &[Triplet]) -> Result<Vec<Triplet>> {
    let p = cfg.pipeline_config();
    subsample_easy(scored, p.tau_easy, p.keep_prob, stream_seed(p.seed, &[0x5ab5]))
}

pub fn curate(cfg: &RunConfig, suite: &Suite, base: &Model) -> Result<CuratedData> {
    let trajectories = collect_rollouts(suite, base, &cfg.pipeline_config())?;
    let (triplets, train, validation) = make_triplets(cfg, &trajectories)?;
    let filter = filter_model(cfg, base, &validation)?;
    let scored = easy_scores(cfg, &filter.model, &train)?;
    let subsampled = subsample(cfg, &scored)?;
    log::info!(
        "curated {} triplets: {} train, {} kept after subsampling",
        triplets.len(),
        train.len(),
        subsampled.len()
    );
    Ok(CuratedData {
        trajectories,
        triplets,
        train,
        validation,
        filter,
        scored,
        subsampled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub trajectories: usize,
    pub triplets: usize,
    pub train: usize,
    pub validation: usize,
    pub easy: usize,
    pub subsampled: usize,
    pub heldout: usize,
}

/// Headline numbers of a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub suite: String,
    pub seed: u64,
    pub counts: DatasetCounts,
    /// Share of parameters with a major update between base and WMRL model.
    pub wmrl_major_update_ratio: f64,
    /// Keyed by model: `base`, `wmrl`, `policy_rl`.
    pub eval: BTreeMap<String, EvalReport>,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub data: CuratedData,
    pub heldout_trajectories: Vec<Trajectory>,
    pub heldout: Vec<Triplet>,
    pub wmrl: TrainOutput,
    pub policy_rl: TrainOutput,
    pub final_metrics: FinalMetrics,
}

/// collect, triplets, filter training, easy scoring, subsampling, WMRL,
/// policy RL from the WMRL model, evaluation of all three models.
pub fn run_pipeline(cfg: &RunConfig, suite: &Suite, base: &Model) -> Result<PipelineRun> {
    let data = curate(cfg, suite, base)?;
    let heldout_trajectories = heldout_trajectories(cfg, suite, base)?;
    let heldout = to_triplets(&heldout_trajectories, cfg.pipeline.history);
    let wmrl = wmrl_train(base, &data.subsampled, &cfg.stage_config("wmrl")?)?;
    let policy_rl = policy_rl_train(&wmrl.model, suite, &cfg.stage_config("policy_rl")?)?;
    let mut eval = BTreeMap::new();
    for (name, model) in [("base", base), ("wmrl", &wmrl.model), ("policy_rl", &policy_rl.model)] {
        eval.insert(name.to_string(), evaluate_model(cfg, suite, model, &heldout)?);
    }
    let ratios = weight_change_ratios(&base.params, &wmrl.model.params, cfg.eval.eta)?;
    let tau_easy = cfg.pipeline.tau_easy;
    let final_metrics = FinalMetrics {
        suite: suite.name.clone(),
        seed: cfg.seed,
        counts: DatasetCounts {
            trajectories: data.trajectories.len(),
            triplets: data.triplets.len(),
            train: data.train.len(),
            validation: data.validation.len(),
            easy: data
                .scored
                .iter()
                .filter(|t| t.easy_score.is_some_and(|s| s > tau_easy))
                .count(),
            subsampled: data.subsampled.len(),
            heldout: heldout.len(),
        },
        wmrl_major_update_ratio: ratios.total.ratio,
        eval,
    };
    Ok(PipelineRun {
        data,
        heldout_trajectories,
        heldout,
        wmrl,
        policy_rl,
        final_metrics,
    })
}
