//! Downstream agent training from the base model with the task-success
//! methods: GRPO on terminal success, rejection-sampling fine-tuning, and
//! distillation from the scripted solver. Reports evaluation success and
//! invalid-action rates.
//!
//! cargo run --release --example policy_training

use wmforge::analysis::evaluate_success;
use wmforge::config::RunConfig;
use wmforge::error::WmError;
use wmforge::pipeline::{build_base, build_suite};
use wmforge::rollout::Actor;
use wmforge::trainer::{distill_train, policy_rl_train, rft_train};

fn main() -> anyhow::Result<()> {
    let cfg = RunConfig::resolve(None, None, &[("seed".into(), "4".into()), ("stages.policy_rl.steps".into(), "8".into())])?;
    let suite = build_suite(&cfg)?;
    let base = build_base(&cfg, &suite)?.model;
    let history = cfg.pipeline.history;
    let report = |name: &str, actor: Actor| -> anyhow::Result<()> {
        let (r, _) = evaluate_success(&suite, actor, 1, history, cfg.eval_seed())?;
        println!(
            "{name:<10} success {:.3} (id {:.3}, ood {:.3})  invalid {:.3}  inefficient {:.3}",
            r.success_rate.mean, r.id.mean, r.ood.mean, r.invalid_action_rate, r.inefficient_action_rate
        );
        Ok(())
    };
    report("oracle", Actor::Oracle)?;
    report("random", Actor::Random)?;
    report("base", Actor::greedy(&base, 48))?;

    let rl = policy_rl_train(&base, &suite, &cfg.stage_config("policy_rl")?)?;
    report("policy-rl", Actor::greedy(&rl.model, 48))?;
    match rft_train(&base, &suite, &cfg.stage_config("rft")?) {
        Ok(out) => report("rft", Actor::greedy(&out.model, 48))?,
        Err(WmError::EmptyDataset(what)) => println!("{:<10} skipped: no {what}", "rft"),
        Err(e) => return Err(e.into()),
    }
    let distilled = distill_train(&base, &suite, &cfg.stage_config("distill")?)?;
    report("distill", Actor::greedy(&distilled.model, 48))?;
    Ok(())
}
