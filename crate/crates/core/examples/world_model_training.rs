//! Train next-state prediction two ways on the same curated data, GRPO
//! against the sim-to-real reward and plain supervised learning, then
//! compare held-out reward, the share of parameters with major updates, and
//! held-out generic perplexity.
//!
//! cargo run --release --example world_model_training [seed]

use wmforge::analysis::{forgetting_proxy, weight_change_ratios, wm_eval};
use wmforge::config::RunConfig;
use wmforge::datapipe::to_triplets;
use wmforge::pipeline::{build_base, build_suite, curate, heldout_trajectories};
use wmforge::trainer::{wm_sft_train, wmrl_train};

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).unwrap_or_else(|| "2".into());
    let cfg = RunConfig::resolve(None, None, &[("seed".into(), seed)])?;
    let suite = build_suite(&cfg)?;
    let base = build_base(&cfg, &suite)?.model;
    let data = curate(&cfg, &suite, &base)?;
    let heldout = to_triplets(&heldout_trajectories(&cfg, &suite, &base)?, cfg.pipeline.history);
    let rl_cfg = cfg.stage_config("wmrl")?;
    let sft_cfg = cfg.stage_config("wm_sft")?;
    let spec = &rl_cfg.reward;
    let score = |m| wm_eval(m, &heldout, spec, cfg.pipeline.history, cfg.eval.max_new_tokens);

    let rl = wmrl_train(&base, &data.subsampled, &rl_cfg)?;
    let sft = wm_sft_train(&base, &data.subsampled, &sft_cfg)?;
    println!("{} training triplets, {} held-out triplets", data.subsampled.len(), heldout.len());
    println!("held-out reward: base {:.3}  wmrl {:.3}  wm-sft {:.3}", score(&base)?, score(&rl.model)?, score(&sft.model)?);

    let corpus = cfg.base_config().generic_heldout();
    for (name, m) in [("wmrl", &rl.model), ("wm-sft", &sft.model)] {
        let w = weight_change_ratios(&base.params, &m.params, cfg.eval.eta)?;
        let f = forgetting_proxy(&base, m, &corpus)?;
        let layers: Vec<String> = w.layers.iter().map(|(k, e)| format!("{k} {:.3}", e.ratio)).collect();
        println!(
            "{name:<7} major-update ratio {:.3} ({}); generic perplexity {:.2} -> {:.2}",
            w.total.ratio,
            layers.join(", "),
            f.ppl_before,
            f.ppl_after
        );
    }
    Ok(())
}
