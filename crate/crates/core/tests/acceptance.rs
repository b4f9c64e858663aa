//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion, and exits non-zero if any fails.
//!
//! `WMFORGE_ACCEPTANCE_ONLY=1,2,5` restricts the run to selected criteria.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use anyhow::{ensure, Context, Result};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestCaseError, TestRunner};
use rand::Rng;
use serde_json::Value;

use wmforge::analysis::{evaluate_success, weight_change_ratios};
use wmforge::config::RunConfig;
use wmforge::datapipe::{mask_json_values, score_triplets, subsample_easy, PipelineConfig, Triplet};
use wmforge::envsim::Suite;
use wmforge::lm::{Adam, AdamConfig, Model, Params, Vocab, BOS};
use wmforge::pipeline::{build_base, build_suite, run_pipeline, PipelineRun};
use wmforge::reward::{
    cos_distance, embed, round_to_step, FailureReason, rouge_f, score_prediction, wm_reward_text, wm_reward_tooldesk, RewardSpec, StateKind,
};
use wmforge::rollout::Actor;
use wmforge::trainer::{
    group_advantages, grpo_gradient, grpo_objective, grpo_step, policy_rl_train, sft_train, wm_sft_train,
    wmrl_train, PgSample, SftExample, TrainConfig,
};
use wmforge::util::rng_for;

/// Seeds of the desk-scale runs behind criteria 6 to 9.
const DESK_SEEDS: [u64; 3] = [0, 1, 2];
/// Kept count of 1000 easy triplets at keep probability 0.1: the 0.5% and
/// 99.5% quantiles of Binomial(1000, 0.1).
const KEEP_INTERVAL_99: (usize, usize) = (76, 125);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict { pass, detail: detail.into() })
}

// 1 ------------------------------------------------------------------------

fn reward_exactness() -> Result<Verdict> {
    let start = Instant::now();
    let spec = RewardSpec::default();
    let tag = |s: &str| format!("<think> </think><next_state>{s}</next_state>");
    let mut failures = Vec::new();
    let mut n_checks = 0;
    let mut check = |name: &str, ok: bool| {
        n_checks += 1;
        if !ok {
            failures.push(name.to_string());
        }
    };
    let same = "You arrive at countertop 1. On the countertop 1, you see a knife 1.";
    check("identity", wm_reward_text(same, same, &spec).value == 1.0);
    check("identity tagged", score_prediction(&tag(same), same, StateKind::Text, &spec).value == 1.0);
    check("orthogonal", cos_distance(&[1.0, 0.0], &[0.0, 1.0])? == 1.0);
    check("disjoint text", wm_reward_text("xyz", "abc", &spec).value == 0.0);
    check("hand cosine", cos_distance(&[1.0, 0.0], &[0.6, 0.8])? == 1.0 - 0.6);
    let aaaa = embed("aaaa", &spec);
    check("single trigram", aaaa.iter().filter(|x| **x != 0.0).count() == 1 && aaaa.iter().any(|x| *x == 1.0));
    check("empty embedding", embed("", &spec).iter().all(|x| *x == 0.0));
    check("same vector", cos_distance(&[0.3, 0.4], &[0.3, 0.4])? == 0.0);
    check("dimension mismatch", cos_distance(&[1.0], &[1.0, 0.0]).is_err());
    check("rouge identity", rouge_f("a b c", "a b c") == 1.0);
    check("rouge disjoint", rouge_f("a b", "c d") == 0.0);
    check("rouge 2/3", rouge_f("a b c", "a c d") == 2.0 / 3.0);
    check("rounding zero", round_to_step(0.0, 0.2) == 0.0);
    check("rounding 0.53", round_to_step(0.53, 0.2) == 0.6);
    check("rounding tie", round_to_step(0.5, 0.2) == 0.6);
    check("tool composite", wm_reward_tooldesk(&tag("a b c"), "a c d", StateKind::Tool, &spec).value == 0.6);
    let missing = wm_reward_tooldesk("<next_state>a b c", "a b c", StateKind::Tool, &spec);
    check("missing tag", missing.value == 0.0 && missing.failure_reason == FailureReason::FormatError);
    // A user reply at distance in [0.2, 0.4): rewarded only under the user threshold.
    let (gold, pred) = ("Yes, please cancel my order for the blue lamp.", "Cancel my order for the lamp, yes.");
    let d = wmforge::reward::text_distance(pred, gold, &spec);
    check("user distance window", (0.2..0.4).contains(&d));
    check("user threshold", wm_reward_tooldesk(&tag(pred), gold, StateKind::User, &spec).value == 1.0);
    check("text threshold", score_prediction(&tag(pred), gold, StateKind::Text, &spec).value == 0.0);
    let secs = start.elapsed().as_secs_f64();
    check("runtime under 1 s", secs < 1.0);
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{n_checks} examples exact, user-case distance {d:.3}, {secs:.3}s")
        } else {
            format!("failed: {}", failures.join(", "))
        },
    )
}

// 2 ------------------------------------------------------------------------

fn fd_vocab() -> Vocab {
    Vocab::build(&["the cat sees a red lamp"])
}

fn random_tokens(rng: &mut impl Rng, len: std::ops::Range<usize>, vocab: usize) -> Vec<u32> {
    let n = rng.gen_range(len);
    (0..n).map(|_| rng.gen_range(0..vocab as u32)).collect()
}

fn perturbed(p: &Params, scale: f64, rng: &mut impl Rng) -> Params {
    let mut q = p.clone();
    for i in 0..q.weights.len() {
        *q.weights.flat_get_mut(i) += rng.gen_range(-scale..scale);
    }
    q
}

/// Largest per-coordinate relative error between `analytic` and a central
/// difference of `f`, with denominators floored at 1e-6.
fn worst_fd_error(p: &Params, analytic: &[f64], f: impl Fn(&Params) -> f64) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let mut plus = p.clone();
        *plus.weights.flat_get_mut(i) += h;
        let mut minus = p.clone();
        *minus.weights.flat_get_mut(i) -= h;
        let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
        worst = worst.max((numeric - a).abs() / numeric.abs().max(a.abs()).max(1e-6));
    }
    worst
}

fn gradient_oracle() -> Result<Verdict> {
    let start = Instant::now();
    let vocab = fd_vocab();
    let v = vocab.len();
    let mut rng = rng_for(2, &[]);
    let (mut worst_lp, mut worst_grpo, mut clipped_tokens) = (0.0f64, 0.0f64, 0usize);
    let draws = 24;
    let mut n_params = 0;
    for draw in 0..draws {
        let theta = Params::init(&vocab, 3, 3, 5, 100 + draw);
        n_params = theta.weights.len();
        ensure!(n_params <= 500, "fixture model has {n_params} parameters");
        let prompt = random_tokens(&mut rng, 0..5, v);
        let completion = random_tokens(&mut rng, 1..5, v);
        let weights: Vec<f64> = (0..completion.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let g = theta.grad_logprob(&prompt, &completion, &weights)?.flat();
        worst_lp = worst_lp.max(worst_fd_error(&theta, &g, |q| {
            q.logprob(&prompt, &completion).unwrap().iter().zip(&weights).map(|(l, w)| l * w).sum()
        }));

        let old = perturbed(&theta, 0.3, &mut rng);
        let reference = perturbed(&theta, 0.3, &mut rng);
        let samples: Vec<PgSample> = (0..3)
            .map(|_| {
                let prompt = random_tokens(&mut rng, 0..4, v);
                let completion = random_tokens(&mut rng, 1..4, v);
                PgSample {
                    old_logprobs: old.logprob(&prompt, &completion).unwrap(),
                    ref_logprobs: reference.logprob(&prompt, &completion).unwrap(),
                    advantage: rng.gen_range(-2.0..2.0),
                    prompt,
                    completion,
                }
            })
            .collect();
        let (eps, beta) = (0.2, 0.05);
        let (grad, stats) = grpo_gradient(&theta, &samples, eps, beta)?;
        clipped_tokens += (stats.clip_frac * stats.tokens as f64).round() as usize;
        worst_grpo = worst_grpo.max(worst_fd_error(&theta, &grad.flat(), |q| {
            grpo_objective(q, &samples, eps, beta).unwrap().0
        }));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst_lp <= 1e-4 && worst_grpo <= 1e-4 && clipped_tokens > 0 && secs < 120.0,
        format!(
            "{draws} draws, {n_params} params: max rel err logprob {worst_lp:.2e}, surrogate {worst_grpo:.2e} \
             ({clipped_tokens} clipped tokens exercised), {secs:.1}s"
        ),
    )
}

// 3 ------------------------------------------------------------------------

fn advantage_normalization() -> Result<Verdict> {
    let mut rng = rng_for(3, &[]);
    let (mut worst_mean, mut worst_std) = (0.0f64, 0.0f64);
    let mut groups = 0;
    while groups < 1000 {
        let g = rng.gen_range(2..=16);
        let rewards: Vec<f64> = if rng.gen_bool(0.5) {
            (0..g).map(|_| rng.gen_range(0..2) as f64).collect()
        } else {
            (0..g).map(|_| rng.gen_range(-5.0..5.0)).collect()
        };
        if rewards.iter().all(|r| *r == rewards[0]) {
            continue;
        }
        groups += 1;
        let a = group_advantages(&rewards)?;
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        worst_mean = worst_mean.max(mean.abs());
        worst_std = worst_std.max((std - 1.0).abs());
    }
    let degenerate_ok = (2..=16).all(|g| {
        let r = vec![0.7; g];
        group_advantages(&r).map(|a| a.iter().all(|x| *x == 0.0)).unwrap_or(false)
    });
    let too_small = group_advantages(&[1.0]).is_err();
    verdict(
        worst_mean <= 1e-9 && worst_std <= 1e-6 && degenerate_ok && too_small,
        format!(
            "1000 groups: max |mean| {worst_mean:.1e}, max |std-1| {worst_std:.1e}; degenerate groups zero: {degenerate_ok}"
        ),
    )
}

// 4 ------------------------------------------------------------------------

fn bandit_vocab() -> Vocab {
    Vocab::build(&[
        "apple", "bread", "cup", "dish", "egg", "fork", "grape", "honey", "ink", "jar", "kettle", "lemon",
    ])
}

/// Steps until the greedy first token is the rewarded one, if within 300.
fn bandit_run(seed: u64) -> Result<Option<usize>> {
    let vocab = bandit_vocab();
    let target = vocab.id("honey").context("target token")?;
    let mut params = Params::init(&vocab, 2, 8, 16, seed);
    let reference = params.snapshot();
    let cfg = TrainConfig {
        lr: 0.02,
        group_size: 8,
        max_new_tokens: 1,
        kl_coef: 0.0,
        seed,
        ..Default::default()
    };
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr), params.dims());
    let greedy = |p: &Params| {
        let lp = p.next_logprobs(&[BOS]);
        (0..lp.len()).max_by(|&a, &b| lp[a].total_cmp(&lp[b])).unwrap() as u32
    };
    for step in 0..300 {
        let old = params.snapshot();
        grpo_step(
            &mut params,
            &mut opt,
            &old,
            &reference,
            &[vec![]],
            &cfg,
            |_, c: &[u32]| (c.first() == Some(&target)) as u8 as f64,
            rng_for(seed, &[step as u64]).gen(),
        )?;
        if greedy(&params) == target {
            return Ok(Some(step + 1));
        }
    }
    Ok(None)
}

fn grpo_bandit() -> Result<Verdict> {
    let start = Instant::now();
    ensure!(bandit_vocab().len() == 20, "bandit vocabulary must have 20 tokens");
    let results: Vec<Option<usize>> = (0..5).map(bandit_run).collect::<Result<_>>()?;
    let secs = start.elapsed().as_secs_f64();
    let solved = results.iter().filter(|r| r.is_some()).count();
    verdict(
        solved == 5 && secs < 60.0,
        format!("V=20, {solved}/5 seeds reach the rewarded argmax; steps {results:?}; {secs:.1}s"),
    )
}

// 5 ------------------------------------------------------------------------

const EASY_GOLD: &str = "You arrive at fridge 1.";
const HARD_GOLD: &str = "Nothing happens.";

fn easy_fixture_triplets() -> Vec<Triplet> {
    let mut out = Vec::new();
    for i in 0..1500 {
        let member = i % 3 != 2;
        out.push(Triplet {
            history: Vec::new(),
            obs: format!("You are in room {}.", i % 7),
            action: ["look", "go to fridge 1", "open drawer 2"][(i + i / 3) % 3].to_string(),
            gold: if member { EASY_GOLD } else { HARD_GOLD }.to_string(),
            kind: StateKind::Text,
            easy_score: None,
            instruction: "Your task is to: cool an apple.".into(),
        });
    }
    out
}

/// A filter model trained to always predict [`EASY_GOLD`], so it succeeds on
/// exactly the triplets whose gold is that text.
fn hand_trained_filter(triplets: &[Triplet]) -> Result<Model> {
    let texts: Vec<String> = triplets
        .iter()
        .take(12)
        .flat_map(|t| [t.prompt(0), t.sft_example(0).target, format!(" {}", t.gold)])
        .chain([format!(" {HARD_GOLD}"), HARD_GOLD.to_string()])
        .collect();
    let vocab = Vocab::build(&texts);
    let model = wmforge::lm::LmConfig { context: 6, embed: 12, hidden: 48, seed: 5 }.init(vocab);
    let data: Vec<SftExample> = triplets
        .iter()
        .take(12)
        .map(|t| SftExample::new(t.prompt(0), wmforge::prompts::wm_target(EASY_GOLD)))
        .collect();
    let cfg = TrainConfig { lr: 1e-2, epochs: 200, batch_size: 12, seed: 5, ..Default::default() };
    Ok(sft_train(&model, &data, &cfg)?.model)
}

fn easy_subsampling() -> Result<Verdict> {
    let spec = RewardSpec::default();
    ensure!(
        wmforge::reward::text_distance(EASY_GOLD, HARD_GOLD, &spec) >= 0.9,
        "fixture golds are too similar"
    );
    let triplets = easy_fixture_triplets();
    let filter = hand_trained_filter(&triplets)?;
    let cfg = PipelineConfig { history: 0, k_attempts: 10, seed: 17, ..Default::default() };
    let scored = score_triplets(&filter, &triplets, &cfg, &spec)?;
    let easy: BTreeSet<usize> = (0..scored.len()).filter(|&i| scored[i].easy_score.unwrap() > 0.0).collect();
    let members: BTreeSet<usize> = (0..triplets.len()).filter(|&i| triplets[i].gold == EASY_GOLD).collect();
    ensure!(members.len() == 1000, "fixture must have 1000 members");
    ensure!(easy == members, "filter succeeds on {} triplets, expected exactly the 1000 members", easy.len());

    let kept = subsample_easy(&scored, 0.0, 0.1, 99)?;
    let again = subsample_easy(&scored, 0.0, 0.1, 99)?;
    let hard_kept = kept.iter().filter(|t| t.gold == HARD_GOLD).count();
    let easy_kept = kept.len() - hard_kept;
    let (lo, hi) = KEEP_INTERVAL_99;
    verdict(
        hard_kept == 500 && (lo..=hi).contains(&easy_kept) && kept == again,
        format!("all 500 non-members kept; {easy_kept}/1000 members kept (99% interval [{lo}, {hi}]); reproducible"),
    )
}

// 6-9 ----------------------------------------------------------------------

struct DeskRun {
    seed: u64,
    run: PipelineRun,
    scratch_ood: Vec<usize>,
    rl_ratio: f64,
    sft_ratio: f64,
}

fn wm_reward(run: &PipelineRun, model: &str) -> f64 {
    run.final_metrics.eval[model].wm_heldout_reward.unwrap_or(f64::NAN)
}

/// The default run config at `seed` on the small household suite, plus the
/// matched comparisons: policy RL from the base model with the same budget,
/// and WMRL against WM-SFT under equal epochs, batch size and 1:2 learning
/// rates.
fn desk_run(seed: u64) -> Result<DeskRun> {
    let t0 = Instant::now();
    let cfg = RunConfig { seed, ..Default::default() };
    let suite: Suite = build_suite(&cfg)?;
    let base = build_base(&cfg, &suite)?.model;
    let run = run_pipeline(&cfg, &suite, &base)?;
    let scratch = policy_rl_train(&base, &suite, &cfg.stage_config("policy_rl")?)?;
    let (scratch_eval, _) = evaluate_success(
        &suite,
        Actor::greedy(&scratch.model, cfg.eval.max_new_tokens),
        cfg.eval.runs,
        cfg.pipeline.history,
        cfg.eval_seed(),
    )?;

    let data = &run.data.subsampled;
    let batch = 32;
    let epochs = 2;
    let rl_cfg = TrainConfig { lr: 1e-6, batch_size: batch, steps: epochs * data.len().div_ceil(batch), ..cfg.stage_config("wmrl")? };
    let sft_cfg = TrainConfig { lr: 2e-6, batch_size: batch, epochs, ..cfg.stage_config("wm_sft")? };
    let rl = wmrl_train(&base, data, &rl_cfg)?;
    let sft = wm_sft_train(&base, data, &sft_cfg)?;
    let rl_ratio = weight_change_ratios(&base.params, &rl.model.params, cfg.eval.eta)?.total.ratio;
    let sft_ratio = weight_change_ratios(&base.params, &sft.model.params, cfg.eval.eta)?.total.ratio;
    println!(
        "    seed {seed}: {} kept triplets, held-out reward base {:.3} wmrl {:.3}, invalid base {:.3} wmrl {:.3}, \
         ood successes scratch {:?} wmrl-init {:?}, major-update ratio wmrl {rl_ratio:.3} wm-sft {sft_ratio:.3} ({:.0}s)",
        run.final_metrics.counts.subsampled,
        wm_reward(&run, "base"),
        wm_reward(&run, "wmrl"),
        run.final_metrics.eval["base"].invalid_action_rate,
        run.final_metrics.eval["wmrl"].invalid_action_rate,
        scratch_eval.ood_successes,
        run.final_metrics.eval["policy_rl"].ood_successes,
        t0.elapsed().as_secs_f64()
    );
    Ok(DeskRun { seed, run, scratch_ood: scratch_eval.ood_successes, rl_ratio, sft_ratio })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_count(xs: &[usize]) -> f64 {
    xs.iter().sum::<usize>() as f64 / xs.len().max(1) as f64
}

fn wmrl_gain(runs: &[DeskRun]) -> Result<Verdict> {
    let min_kept = runs.iter().map(|r| r.run.final_metrics.counts.subsampled).min().unwrap_or(0);
    let b = mean(runs.iter().map(|r| wm_reward(&r.run, "base")));
    let after = mean(runs.iter().map(|r| wm_reward(&r.run, "wmrl")));
    verdict(
        min_kept >= 200 && after >= b + 0.3,
        format!("3-seed mean held-out reward {after:.3} vs baseline {b:.3} (gain {:.3}, need 0.3); min kept {min_kept}", after - b),
    )
}

fn policy_ordering(runs: &[DeskRun]) -> Result<Verdict> {
    let from_wmrl = mean(runs.iter().map(|r| mean_count(&r.run.final_metrics.eval["policy_rl"].ood_successes)));
    let scratch = mean(runs.iter().map(|r| mean_count(&r.scratch_ood)));
    verdict(
        from_wmrl >= scratch - 1.0,
        format!("mean ood successes: wmrl-initialized {from_wmrl:.2}, base-initialized {scratch:.2} (ties within 1 task)"),
    )
}

fn invalid_direction(runs: &[DeskRun]) -> Result<Verdict> {
    let base = mean(runs.iter().map(|r| r.run.final_metrics.eval["base"].invalid_action_rate));
    let wmrl = mean(runs.iter().map(|r| r.run.final_metrics.eval["wmrl"].invalid_action_rate));
    let per_seed: Vec<String> = runs
        .iter()
        .map(|r| {
            format!(
                "{}: {:.3}->{:.3}",
                r.seed,
                r.run.final_metrics.eval["base"].invalid_action_rate,
                r.run.final_metrics.eval["wmrl"].invalid_action_rate
            )
        })
        .collect();
    verdict(
        wmrl < base,
        format!("3-seed mean invalid-action rate base {base:.4}, wmrl {wmrl:.4} [{}]", per_seed.join(", ")),
    )
}

fn weight_change(runs: &[DeskRun]) -> Result<Verdict> {
    let vocab = fd_vocab();
    let mut rng = rng_for(9, &[]);
    // Zero weights are not counted, so start from all-nonzero values.
    let mut before = Params::init(&vocab, 3, 3, 5, 9);
    let n_total = before.weights.len();
    for i in 0..n_total {
        *before.weights.flat_get_mut(i) = rng.gen_range(0.1..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    }
    let mut exact = true;
    for _ in 0..50 {
        let k = rng.gen_range(0..=n_total);
        let picked = rand::seq::index::sample(&mut rng, n_total, k);
        let mut after = before.clone();
        for i in 0..n_total {
            let w = after.weights.flat_get_mut(i);
            *w *= if picked.iter().any(|j| j == i) { 1.01 } else { 1.0 + 1e-4 };
        }
        let r = weight_change_ratios(&before, &after, 1e-3)?;
        exact &= r.total.major == k && r.total.counted == n_total && r.total.ratio == k as f64 / n_total as f64;
    }
    let directional = runs.iter().all(|r| r.rl_ratio < r.sft_ratio);
    let detail: Vec<String> = runs
        .iter()
        .map(|r| format!("seed {}: wmrl {:.3} < wm-sft {:.3}", r.seed, r.rl_ratio, r.sft_ratio))
        .collect();
    verdict(
        exact && directional,
        format!("synthetic k/n exact over 50 draws: {exact}; {}", detail.join(", ")),
    )
}

// 10 -----------------------------------------------------------------------

fn json_leaf() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i32>().prop_map(Value::from),
        (-1e6f64..1e6).prop_map(Value::from),
        "[a-zA-Z0-9 @._-]{1,12}".prop_map(Value::String),
    ]
}

fn json_doc() -> impl Strategy<Value = Value> {
    json_leaf().prop_recursive(4, 48, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..5).prop_map(Value::Array),
            prop::collection::btree_map("[a-z_]{1,8}", inner, 0..5)
                .prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

fn leaves(v: &Value, out: &mut Vec<Value>) {
    match v {
        Value::Array(a) => a.iter().for_each(|x| leaves(x, out)),
        Value::Object(m) => m.values().for_each(|x| leaves(x, out)),
        other => out.push(other.clone()),
    }
}

/// Same shape with every leaf replaced by a fixed value of the same type.
fn neutralized(v: &Value) -> Value {
    match v {
        Value::Array(a) => Value::Array(a.iter().map(neutralized).collect()),
        Value::Object(m) => Value::Object(m.iter().map(|(k, x)| (k.clone(), neutralized(x))).collect()),
        Value::String(_) => Value::from("s"),
        Value::Number(_) => Value::from(0),
        other => other.clone(),
    }
}

fn is_schema(v: &Value) -> bool {
    let Some(m) = v.as_object() else { return false };
    match m.get("type").and_then(Value::as_str) {
        Some("object") => m.len() == 2 && m["properties"].as_object().is_some_and(|p| p.values().all(is_schema)),
        Some("array") => m.len() == 2 && (m["items"] == serde_json::json!({}) || is_schema(&m["items"])),
        Some("string" | "number" | "boolean" | "null") => m.len() == 1,
        _ => false,
    }
}

fn masking_safety() -> Result<Verdict> {
    let mut runner = TestRunner::new(PropConfig { cases: 1000, failure_persistence: None, ..PropConfig::default() });
    let outcome = runner.run(&json_doc(), |doc| {
        let text = doc.to_string();
        let masked = mask_json_values(&text);
        let parsed: Value = serde_json::from_str(&masked).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(is_schema(&parsed), "not a schema: {masked}");
        let mut input_leaves = Vec::new();
        leaves(&doc, &mut input_leaves);
        let mut output_leaves = Vec::new();
        leaves(&parsed, &mut output_leaves);
        for leaf in input_leaves.iter().filter(|l| l.is_string() || l.is_number()) {
            prop_assert!(!output_leaves.contains(leaf), "leaf {leaf} survived masking");
        }
        prop_assert_eq!(&mask_json_values(&neutralized(&doc).to_string()), &masked);
        let twice: Value = serde_json::from_str(&mask_json_values(&masked)).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(is_schema(&twice));
        Ok(())
    });
    let worked = mask_json_values(r#"{"customer_id":"abc123","full_name":"John Doe"}"#);
    let expected = r#"{"type":"object","properties":{"customer_id":{"type":"string"},"full_name":{"type":"string"}}}"#;
    let worked_ok = worked.split_whitespace().collect::<String>() == expected;
    match outcome {
        Ok(()) => verdict(worked_ok, format!("1000 random documents safe and structural; worked example exact: {worked_ok}")),
        Err(e) => verdict(false, format!("property violated: {e}")),
    }
}

// 11 -----------------------------------------------------------------------

fn pipeline_determinism() -> Result<Verdict> {
    let exe = env!("CARGO_BIN_EXE_wmforge");
    let dir = tempfile::tempdir()?;
    let config = dir.path().join("run.json");
    std::fs::write(
        &config,
        r#"{
  "seed": 11,
  "suite": {"n_train": 8, "n_id_eval": 3, "n_ood_eval": 3},
  "base": {"generic_docs": 40, "heldout_docs": 10, "policy_examples": 80, "wm_examples": 80, "plays_per_task": 1},
  "pipeline": {"n_rollouts": 2, "k_attempts": 3},
  "stages": {
    "pretrain": {"epochs": 2},
    "filter": {"epochs": 2},
    "wmrl": {"steps": 4, "group_size": 4},
    "policy_rl": {"steps": 2, "batch_size": 4, "group_size": 4}
  },
  "eval": {"heldout_rollouts": 1}
}"#,
    )?;
    let mut outputs = Vec::new();
    for (run, workers) in [("a", "1"), ("b", "1"), ("c", "4")] {
        let out_dir = dir.path().join(run);
        let status = Command::new(exe)
            .args(["pipeline", "--config"])
            .arg(&config)
            .args(["--workers", workers, "--output_dir"])
            .arg(&out_dir)
            .env_remove("WMFORGE_SEED")
            .output()?;
        ensure!(status.status.success(), "pipeline failed: {}", String::from_utf8_lossy(&status.stderr));
        outputs.push(std::fs::read(out_dir.join("reports/final_metrics.json"))?);
    }
    let repeat = outputs[0] == outputs[1];
    let workers = outputs[0] == outputs[2];
    verdict(
        repeat && workers,
        format!("final metrics byte-identical on rerun: {repeat}; workers 1 vs 4: {workers}"),
    )
}

// --------------------------------------------------------------------------

type Criterion<'a> = (u8, &'a str, Box<dyn Fn() -> Result<Verdict> + 'a>);

fn main() {
    let only: Option<BTreeSet<u8>> = std::env::var("WMFORGE_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |id: u8| only.as_ref().is_none_or(|o| o.contains(&id));

    let desk: std::cell::OnceCell<std::result::Result<Vec<DeskRun>, String>> = std::cell::OnceCell::new();
    let desk_runs = || -> Result<&Vec<DeskRun>> {
        desk.get_or_init(|| {
            println!("  running desk-scale pipelines for seeds {DESK_SEEDS:?}");
            DESK_SEEDS.iter().map(|&s| desk_run(s)).collect::<Result<Vec<_>>>().map_err(|e| format!("{e:#}"))
        })
        .as_ref()
        .map_err(|e| anyhow::anyhow!("desk-scale runs failed: {e}"))
    };

    let criteria: Vec<Criterion> = vec![
        (1, "reward exactness", Box::new(reward_exactness)),
        (2, "gradient oracle", Box::new(gradient_oracle)),
        (3, "advantage normalization", Box::new(advantage_normalization)),
        (4, "GRPO bandit", Box::new(grpo_bandit)),
        (5, "easy-sample subsampling", Box::new(easy_subsampling)),
        (6, "WMRL held-out gain", Box::new(|| wmrl_gain(desk_runs()?))),
        (7, "WMRL-then-policy-RL ordering", Box::new(|| policy_ordering(desk_runs()?))),
        (8, "invalid-action direction", Box::new(|| invalid_direction(desk_runs()?))),
        (9, "weight-change ratios", Box::new(|| weight_change(desk_runs()?))),
        (10, "masking safety", Box::new(masking_safety)),
        (11, "end-to-end determinism", Box::new(pipeline_determinism)),
    ];

    let mut failed = Vec::new();
    for (id, name, check) in &criteria {
        if !wanted(*id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check));
        let (pass, detail) = match result {
            Ok(Ok(v)) => (v.pass, v.detail),
            Ok(Err(e)) => (false, format!("error: {e:#}")),
            Err(_) => (false, "panicked".to_string()),
        };
        println!(
            "[{}] criterion {id:>2} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        if !pass {
            failed.push(*id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
