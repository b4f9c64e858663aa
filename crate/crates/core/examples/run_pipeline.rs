//! The whole chain from a run config: base model, curated data, WMRL,
//! policy RL initialized from the WMRL model, and evaluation. Extra
//! arguments are dotted overrides, e.g. `pipeline.n_rollouts=3`.
//!
//! cargo run --release --example run_pipeline -- seed=1 stages.wmrl.steps=30

use wmforge::config::RunConfig;
use wmforge::pipeline::{build_base, build_suite, run_pipeline};

fn main() -> anyhow::Result<()> {
    let overrides: Vec<(String, String)> = std::env::args()
        .skip(1)
        .map(|a| match a.split_once('=') {
            Some((k, v)) => Ok((k.to_string(), v.to_string())),
            None => Err(anyhow::anyhow!("expected key=value, got {a}")),
        })
        .collect::<anyhow::Result<_>>()?;
    let cfg = RunConfig::resolve(None, None, &overrides)?;
    let suite = build_suite(&cfg)?;
    let base = build_base(&cfg, &suite)?.model;
    let run = run_pipeline(&cfg, &suite, &base)?;
    println!("{}", serde_json::to_string_pretty(&run.final_metrics)?);
    Ok(())
}
