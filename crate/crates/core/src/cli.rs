//! Command-line front end. Every subcommand resolves a [`RunConfig`],
//! writes its artifacts under the output directory together with the
//! resolved config, and prints one JSON summary line to stdout.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::analysis::{evaluate_success, forgetting_proxy, weight_change_ratios, write_plot_csv};
use crate::config::{EvalMode, Layout, RunConfig, SEED_ENV_VAR};
use crate::datapipe::{collect_rollouts, read_jsonl, to_triplets, write_jsonl, Triplet};
use crate::envsim::Suite;
use crate::error::{Result, WmError};
use crate::lm::Model;
use crate::pipeline::{
    build_base, build_suite, easy_scores, evaluate_model, filter_model, heldout_trajectories, make_triplets,
    run_pipeline, subsample,
};
use crate::reward::{score_prediction, StateKind};
use crate::rollout::{Actor, Trajectory};
use crate::trainer::{
    distill_train, policy_rl_train, rft_train, wm_sft_train, wmrl_train, write_metrics, Stage, StepMetrics,
    TrainOutput,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_EMPTY_DATASET: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "wmforge", version, about = "World-model RL for text agents at desk scale")]
#[command(after_help = "Any config field can be overridden with a dotted flag, e.g. --train.group_size 8")]
pub struct Cli {
    /// JSON run config; missing fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for rollouts, scoring and gradients.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Also write CSV series for plotting.
    #[arg(long, global = true)]
    pub plot_data: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Pretrain,
    WmSft,
    Wmrl,
    PolicyRl,
    Rft,
    Distill,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::Pretrain => Stage::Pretrain,
            StageArg::WmSft => Stage::WmSft,
            StageArg::Wmrl => Stage::Wmrl,
            StageArg::PolicyRl => Stage::PolicyRl,
            StageArg::Rft => Stage::Rft,
            StageArg::Distill => Stage::Distill,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the task suite.
    GenSuite,
    /// Sample base-model episodes on train tasks (and held-out eval tasks).
    Collect,
    /// Turn episodes into triplets and split train/validation.
    Triplets,
    /// Fit the difficulty filter model on the validation split.
    FilterTrain,
    /// Score train triplets with the filter model.
    EasyScore,
    /// Drop most easy triplets.
    Subsample,
    /// Run one training stage.
    Train { stage: Option<StageArg> },
    /// Evaluate task success, or replay the oracle/random actor.
    Eval {
        #[arg(long)]
        oracle: bool,
        #[arg(long, conflicts_with = "oracle")]
        random: bool,
    },
    /// Append reward fields to JSONL records {pred, gold, kind}.
    Score { input: Option<PathBuf> },
    /// Share of major parameter updates between two checkpoints.
    AnalyzeWeights {
        #[arg(long)]
        before: Option<PathBuf>,
        #[arg(long)]
        after: Option<PathBuf>,
    },
    /// Held-out generic perplexity before and after training.
    Forgetting {
        #[arg(long)]
        before: Option<PathBuf>,
        #[arg(long)]
        after: Option<PathBuf>,
    },
    /// Full chain from rollouts to evaluation.
    Pipeline,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenSuite => "gen-suite",
            Command::Collect => "collect",
            Command::Triplets => "triplets",
            Command::FilterTrain => "filter-train",
            Command::EasyScore => "easy-score",
            Command::Subsample => "subsample",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Score { .. } => "score",
            Command::AnalyzeWeights { .. } => "analyze-weights",
            Command::Forgetting { .. } => "forgetting",
            Command::Pipeline => "pipeline",
        }
    }
}

pub fn exit_code(err: &WmError) -> i32 {
    match err {
        WmError::ConfigError { .. } | WmError::NotFound(_) => EXIT_CONFIG,
        WmError::NumericalError(_) => EXIT_NUMERICAL,
        WmError::EmptyDataset(_) => EXIT_EMPTY_DATASET,
        _ => EXIT_FAILURE,
    }
}

/// Undotted config keys that may be overridden directly.
pub const TOP_LEVEL_KEYS: [&str; 3] = ["seed", "output_dir", "stage"];

/// Separate dotted `--a.b value` / `--a.b=value` overrides (and the
/// top-level keys) from the arguments clap understands.
pub fn split_overrides(args: &[String]) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let mut plain = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let Some(flag) = a.strip_prefix("--") else {
            plain.push(a.clone());
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n, Some(v.to_string())),
            None => (flag, None),
        };
        if !name.contains('.') && !TOP_LEVEL_KEYS.contains(&name) {
            plain.push(a.clone());
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .cloned()
                .ok_or_else(|| WmError::config(name, "override flag needs a value"))?,
        };
        overrides.push((name.to_string(), value));
    }
    Ok((plain, overrides))
}

/// Parse, run and report. Returns the process exit code.
pub fn main_with_args(args: Vec<String>) -> i32 {
    let (plain, overrides) = match split_overrides(&args) {
        Ok(x) => x,
        Err(e) => return report_error("unknown", &e),
    };
    let cli = match Cli::try_parse_from(&plain) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let env_seed = std::env::var(SEED_ENV_VAR).ok();
    match run(&cli, env_seed.as_deref(), &overrides) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => report_error(cli.command.name(), &e),
    }
}

fn report_error(command: &str, e: &WmError) -> i32 {
    let code = exit_code(e);
    eprintln!("error: {e}");
    println!(
        "{}",
        json!({"command": command, "status": "error", "exit_code": code, "error": e.to_string()})
    );
    code
}

/// Resolve the config and run the subcommand inside a pool of
/// `--workers` threads.
pub fn run(cli: &Cli, env_seed: Option<&str>, overrides: &[(String, String)]) -> Result<Value> {
    let mut cfg = RunConfig::resolve(cli.config.as_deref(), env_seed, overrides)?;
    if cli.plot_data {
        cfg.eval.plot_data = true;
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(WmError::config("workers", "must be positive"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| WmError::config("workers", e.to_string()))?;
    pool.install(|| dispatch(&cli.command, &cfg))
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    out: Layout,
}

impl Ctx<'_> {
    /// An input file: the explicit path if configured, else `default`.
    fn input(&self, explicit: &Option<PathBuf>, field: &str, default: PathBuf) -> Result<PathBuf> {
        let p = explicit.clone().unwrap_or(default);
        if p.is_file() {
            Ok(p)
        } else {
            Err(WmError::config(
                format!("paths.{field}"),
                format!("input {} does not exist", p.display()),
            ))
        }
    }

    fn suite(&self) -> Result<Suite> {
        Suite::load(&self.input(&self.cfg.paths.suite, "suite", self.out.suite())?)
    }

    fn model(&self, default_name: &str) -> Result<(Model, PathBuf)> {
        let p = self.input(&self.cfg.paths.checkpoint, "checkpoint", self.out.checkpoint(default_name))?;
        Ok((Model::load(&p)?, p))
    }

    fn triplets(&self, explicit: &Option<PathBuf>, field: &str, default: &str) -> Result<Vec<Triplet>> {
        read_jsonl(&self.input(explicit, field, self.out.data(default))?)
    }

    fn checkpoint_out(&self, name: &str) -> PathBuf {
        self.cfg
            .paths
            .checkpoint_out
            .clone()
            .unwrap_or_else(|| self.out.checkpoint(name))
    }

    fn save_training(&self, name: &str, out: &TrainOutput) -> Result<Value> {
        let ckpt = self.checkpoint_out(name);
        out.model.save(&ckpt)?;
        self.save_metrics(name, &out.metrics)?;
        let last = out.metrics.last();
        Ok(json!({
            "stage": name,
            "checkpoint": ckpt,
            "steps": out.metrics.len(),
            "dataset_size": out.dataset_size,
            "final_loss": last.map(|m| m.loss),
            "final_mean_reward": last.and_then(|m| m.mean_reward),
        }))
    }

    fn save_metrics(&self, name: &str, metrics: &[StepMetrics]) -> Result<()> {
        write_metrics(&self.out.metrics(name), metrics)?;
        if self.cfg.eval.plot_data {
            let mut series: Vec<(String, Vec<(usize, f64)>)> = vec![(
                "loss".into(),
                metrics.iter().map(|m| (m.step, m.loss)).collect(),
            )];
            let optional: [(&str, fn(&StepMetrics) -> Option<f64>); 3] = [
                ("mean_reward", |m| m.mean_reward),
                ("kl", |m| m.kl),
                ("clip_frac", |m| m.clip_frac),
            ];
            for (label, get) in optional {
                let pts: Vec<(usize, f64)> = metrics.iter().filter_map(|m| get(m).map(|v| (m.step, v))).collect();
                if !pts.is_empty() {
                    series.push((label.into(), pts));
                }
            }
            write_plot_csv(&self.out.metrics_csv(name), &series)?;
        }
        Ok(())
    }

    fn write_report<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.out.report(name);
        write_json(&path, value)?;
        Ok(path)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<Value> {
    let ctx = Ctx { cfg, out: cfg.layout() };
    std::fs::create_dir_all(&ctx.out.root)?;
    std::fs::write(ctx.out.resolved_config(), cfg.snapshot_json()?)?;
    let mut body = match command {
        Command::GenSuite => gen_suite(&ctx)?,
        Command::Collect => collect(&ctx)?,
        Command::Triplets => triplets(&ctx)?,
        Command::FilterTrain => {
            let (base, _) = ctx.model("base")?;
            let validation = ctx.triplets(&cfg.paths.validation, "validation", "validation")?;
            ctx.save_training("filter", &filter_model(cfg, &base, &validation)?)?
        }
        Command::EasyScore => {
            let (filter, _) = ctx.model("filter")?;
            let train = ctx.triplets(&cfg.paths.dataset, "dataset", "train")?;
            let scored = easy_scores(cfg, &filter, &train)?;
            let path = ctx.out.data("scored");
            write_jsonl(&path, &scored)?;
            let easy = scored
                .iter()
                .filter(|t| t.easy_score.is_some_and(|s| s > cfg.pipeline.tau_easy))
                .count();
            json!({"scored": scored.len(), "easy": easy, "output": path})
        }
        Command::Subsample => {
            let scored = ctx.triplets(&cfg.paths.dataset, "dataset", "scored")?;
            let kept = subsample(cfg, &scored)?;
            let path = ctx.out.data("subsampled");
            write_jsonl(&path, &kept)?;
            json!({"input": scored.len(), "kept": kept.len(), "output": path})
        }
        Command::Train { stage } => {
            let stage = stage
                .map(Stage::from)
                .or(cfg.stage)
                .ok_or_else(|| WmError::config("stage", "no stage given"))?;
            train(&ctx, stage)?
        }
        Command::Eval { oracle, random } => {
            let mode = match (oracle, random) {
                (true, _) => EvalMode::Oracle,
                (_, true) => EvalMode::Random,
                _ => cfg.eval.mode,
            };
            eval(&ctx, mode)?
        }
        Command::Score { input } => score(&ctx, input)?,
        Command::AnalyzeWeights { before, after } => {
            let (b, a) = before_after(&ctx, before, after)?;
            let report = weight_change_ratios(&b.params, &a.params, cfg.eval.eta)?;
            let path = ctx.write_report("weights", &report)?;
            if cfg.eval.plot_data {
                let series: Vec<(String, Vec<(usize, f64)>)> = report
                    .layers
                    .iter()
                    .map(|(k, e)| (k.clone(), vec![(0, e.ratio)]))
                    .chain(std::iter::once(("total".to_string(), vec![(0, report.total.ratio)])))
                    .collect();
                write_plot_csv(&path.with_extension("csv"), &series)?;
            }
            json!({"total_ratio": report.total.ratio, "counted": report.total.counted, "output": path})
        }
        Command::Forgetting { before, after } => {
            let (b, a) = before_after(&ctx, before, after)?;
            let report = forgetting_proxy(&b, &a, &cfg.base_config().generic_heldout())?;
            let path = ctx.write_report("forgetting", &report)?;
            json!({"ppl_before": report.ppl_before, "ppl_after": report.ppl_after, "delta": report.delta, "output": path})
        }
        Command::Pipeline => pipeline(&ctx)?,
    };
    let mut summary = Map::new();
    summary.insert("command".into(), command.name().into());
    summary.insert("status".into(), "ok".into());
    summary.insert("output_dir".into(), json!(ctx.out.root));
    if let Value::Object(m) = &mut body {
        summary.append(m);
    }
    Ok(Value::Object(summary))
}

fn gen_suite(ctx: &Ctx) -> Result<Value> {
    let suite = build_suite(ctx.cfg)?;
    let path = ctx.out.suite();
    suite.save(&path)?;
    Ok(json!({"suite": suite.name, "tasks": suite.tasks.len(), "output": path}))
}

fn collect(ctx: &Ctx) -> Result<Value> {
    let suite = ctx.suite()?;
    let (model, _) = ctx.model("base")?;
    let trajs = collect_rollouts(&suite, &model, &ctx.cfg.pipeline_config())?;
    let held = heldout_trajectories(ctx.cfg, &suite, &model)?;
    write_jsonl(&ctx.out.data("trajectories"), &trajs)?;
    write_jsonl(&ctx.out.data("heldout_trajectories"), &held)?;
    Ok(json!({
        "trajectories": trajs.len(),
        "heldout_trajectories": held.len(),
        "invalid_action_rate": crate::analysis::invalid_action_rate(&trajs),
    }))
}

fn triplets(ctx: &Ctx) -> Result<Value> {
    let paths = &ctx.cfg.paths;
    let trajs: Vec<Trajectory> =
        read_jsonl(&ctx.input(&paths.trajectories, "trajectories", ctx.out.data("trajectories"))?)?;
    let (all, train, validation) = make_triplets(ctx.cfg, &trajs)?;
    write_jsonl(&ctx.out.data("triplets"), &all)?;
    write_jsonl(&ctx.out.data("train"), &train)?;
    write_jsonl(&ctx.out.data("validation"), &validation)?;
    let held_path = paths
        .heldout_trajectories
        .clone()
        .unwrap_or_else(|| ctx.out.data("heldout_trajectories"));
    let mut heldout = None;
    if held_path.is_file() {
        let held: Vec<Trajectory> = read_jsonl(&held_path)?;
        let t = to_triplets(&held, ctx.cfg.pipeline.history);
        write_jsonl(&ctx.out.data("heldout"), &t)?;
        heldout = Some(t.len());
    }
    Ok(json!({
        "triplets": all.len(),
        "train": train.len(),
        "validation": validation.len(),
        "heldout": heldout,
    }))
}

fn train(ctx: &Ctx, stage: Stage) -> Result<Value> {
    let cfg = ctx.cfg;
    let (name, out) = match stage {
        Stage::Pretrain => ("base", build_base(cfg, &ctx.suite()?)?),
        Stage::WmSft | Stage::Wmrl => {
            let (base, _) = ctx.model("base")?;
            let data = ctx.triplets(&cfg.paths.dataset, "dataset", "subsampled")?;
            if stage == Stage::Wmrl {
                ("wmrl", wmrl_train(&base, &data, &cfg.stage_config("wmrl")?)?)
            } else {
                ("wm_sft", wm_sft_train(&base, &data, &cfg.stage_config("wm_sft")?)?)
            }
        }
        Stage::PolicyRl | Stage::Rft | Stage::Distill => {
            let suite = ctx.suite()?;
            let (model, _) = ctx.model("base")?;
            match stage {
                Stage::PolicyRl => ("policy_rl", policy_rl_train(&model, &suite, &cfg.stage_config("policy_rl")?)?),
                Stage::Rft => ("rft", rft_train(&model, &suite, &cfg.stage_config("rft")?)?),
                _ => ("distill", distill_train(&model, &suite, &cfg.stage_config("distill")?)?),
            }
        }
    };
    ctx.save_training(name, &out)
}

fn eval(ctx: &Ctx, mode: EvalMode) -> Result<Value> {
    let cfg = ctx.cfg;
    let suite = ctx.suite()?;
    let history = cfg.pipeline.history;
    let (report, source) = match mode {
        EvalMode::Oracle | EvalMode::Random => {
            let actor = if mode == EvalMode::Oracle { Actor::Oracle } else { Actor::Random };
            let (r, _) = evaluate_success(&suite, actor, cfg.eval.runs, history, cfg.eval_seed())?;
            (r, Value::from(if mode == EvalMode::Oracle { "oracle" } else { "random" }))
        }
        EvalMode::Model => {
            let (model, path) = ctx.model("base")?;
            let held_path = cfg.paths.heldout.clone().unwrap_or_else(|| ctx.out.data("heldout"));
            let heldout: Vec<Triplet> = if held_path.is_file() { read_jsonl(&held_path)? } else { Vec::new() };
            (evaluate_model(cfg, &suite, &model, &heldout)?, json!(path))
        }
    };
    let path = ctx.write_report("eval", &report)?;
    if cfg.eval.plot_data {
        let mut series = vec![
            ("success_rate".to_string(), vec![(0, report.success_rate.mean)]),
            ("invalid_action_rate".to_string(), vec![(0, report.invalid_action_rate)]),
        ];
        if let Some(r) = report.wm_heldout_reward {
            series.push(("wm_heldout_reward".into(), vec![(0, r)]));
        }
        write_plot_csv(&path.with_extension("csv"), &series)?;
    }
    Ok(json!({
        "source": source,
        "success_rate": report.success_rate.mean,
        "ood_success_rate": report.ood.mean,
        "invalid_action_rate": report.invalid_action_rate,
        "wm_heldout_reward": report.wm_heldout_reward,
        "output": path,
    }))
}

fn score(ctx: &Ctx, input: &Option<PathBuf>) -> Result<Value> {
    let explicit = input.clone().or_else(|| ctx.cfg.paths.predictions.clone());
    let Some(explicit) = explicit else {
        return Err(WmError::config("paths.predictions", "score needs an input file"));
    };
    let path = ctx.input(&Some(explicit), "predictions", PathBuf::new())?;
    let spec = &ctx.cfg.stage_config("wmrl")?.reward;
    let records: Vec<Map<String, Value>> = read_jsonl(&path)?;
    let mut out = Vec::with_capacity(records.len());
    let mut total = 0.0;
    for (i, mut rec) in records.into_iter().enumerate() {
        let field = |k: &str| -> Result<Value> {
            rec.get(k).cloned().ok_or_else(|| WmError::ParseError {
                line: i + 1,
                message: format!("missing field `{k}`"),
            })
        };
        let text = |v: Value, k: &str| -> Result<String> {
            v.as_str().map(str::to_string).ok_or_else(|| WmError::ParseError {
                line: i + 1,
                message: format!("field `{k}` must be a string"),
            })
        };
        let pred = text(field("pred")?, "pred")?;
        let gold = text(field("gold")?, "gold")?;
        let kind: StateKind = serde_json::from_value(field("kind")?).map_err(|e| WmError::ParseError {
            line: i + 1,
            message: format!("field `kind`: {e}"),
        })?;
        let r = score_prediction(&pred, &gold, kind, spec);
        total += r.value;
        rec.insert("value".into(), json!(r.value));
        rec.insert("distance".into(), json!(r.distance));
        rec.insert("rouge".into(), json!(r.rouge));
        out.push(rec);
    }
    let dest = ctx.out.data("scored_predictions");
    write_jsonl(&dest, &out)?;
    let n = out.len();
    Ok(json!({
        "records": n,
        "mean_value": if n == 0 { 0.0 } else { total / n as f64 },
        "output": dest,
    }))
}

fn before_after(ctx: &Ctx, before: &Option<PathBuf>, after: &Option<PathBuf>) -> Result<(Model, Model)> {
    let paths = &ctx.cfg.paths;
    let b = ctx.input(
        &before.clone().or_else(|| paths.before.clone()),
        "before",
        ctx.out.checkpoint("base"),
    )?;
    let Some(a) = after.clone().or_else(|| paths.after.clone()) else {
        return Err(WmError::config("paths.after", "a checkpoint to compare is required"));
    };
    let a = ctx.input(&Some(a), "after", PathBuf::new())?;
    Ok((Model::load(&b)?, Model::load(&a)?))
}

fn pipeline(ctx: &Ctx) -> Result<Value> {
    let cfg = ctx.cfg;
    let suite = match &cfg.paths.suite {
        Some(_) => ctx.suite()?,
        None => {
            let s = build_suite(cfg)?;
            s.save(&ctx.out.suite())?;
            s
        }
    };
    let base = match &cfg.paths.checkpoint {
        Some(_) => ctx.model("base")?.0,
        None => {
            let out = build_base(cfg, &suite)?;
            out.model.save(&ctx.out.checkpoint("base"))?;
            ctx.save_metrics("pretrain", &out.metrics)?;
            out.model
        }
    };
    let run = run_pipeline(cfg, &suite, &base)?;
    let d = &run.data;
    for (name, rows) in [
        ("triplets", &d.triplets),
        ("train", &d.train),
        ("validation", &d.validation),
        ("scored", &d.scored),
        ("subsampled", &d.subsampled),
        ("heldout", &run.heldout),
    ] {
        write_jsonl(&ctx.out.data(name), rows)?;
    }
    write_jsonl(&ctx.out.data("trajectories"), &d.trajectories)?;
    write_jsonl(&ctx.out.data("heldout_trajectories"), &run.heldout_trajectories)?;
    for (name, out) in [("filter", &d.filter), ("wmrl", &run.wmrl), ("policy_rl", &run.policy_rl)] {
        out.model.save(&ctx.out.checkpoint(name))?;
        ctx.save_metrics(name, &out.metrics)?;
    }
    for (name, report) in &run.final_metrics.eval {
        ctx.write_report(&format!("eval_{name}"), report)?;
    }
    let path = ctx.write_report("final_metrics", &run.final_metrics)?;
    let fm = &run.final_metrics;
    let wm = |k: &str| fm.eval.get(k).and_then(|r| r.wm_heldout_reward);
    let success = |k: &str| fm.eval.get(k).map(|r| r.success_rate.mean);
    Ok(json!({
        "subsampled": fm.counts.subsampled,
        "wm_reward_base": wm("base"),
        "wm_reward_wmrl": wm("wmrl"),
        "success_policy_rl": success("policy_rl"),
        "final_metrics": path,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn overrides_are_split_from_clap_args() {
        let (plain, over) = split_overrides(&s(&[
            "wmforge",
            "train",
            "wmrl",
            "--train.group_size",
            "8",
            "--workers",
            "2",
            "--stages.wmrl.lr=0.01",
        ]))
        .unwrap();
        assert_eq!(plain, s(&["wmforge", "train", "wmrl", "--workers", "2"]));
        assert_eq!(
            over,
            vec![
                ("train.group_size".to_string(), "8".to_string()),
                ("stages.wmrl.lr".to_string(), "0.01".to_string())
            ]
        );
        assert!(split_overrides(&s(&["wmforge", "--train.lr"])).is_err());
    }

    #[test]
    fn error_kinds_map_to_exit_codes() {
        assert_eq!(exit_code(&WmError::config("a", "b")), EXIT_CONFIG);
        assert_eq!(exit_code(&WmError::NumericalError("x".into())), EXIT_NUMERICAL);
        assert_eq!(exit_code(&WmError::EmptyDataset("x".into())), EXIT_EMPTY_DATASET);
        assert_eq!(exit_code(&WmError::FormatError("x".into())), EXIT_FAILURE);
    }

    #[test]
    fn parses_every_subcommand() {
        for args in [
            &["wmforge", "gen-suite"][..],
            &["wmforge", "train", "policy-rl"],
            &["wmforge", "eval", "--oracle"],
            &["wmforge", "score", "x.jsonl"],
            &["wmforge", "analyze-weights", "--after", "a.json"],
            &["wmforge", "pipeline", "--workers", "4"],
        ] {
            Cli::try_parse_from(args).unwrap();
        }
        assert!(Cli::try_parse_from(["wmforge", "eval", "--oracle", "--random"]).is_err());
    }
}
