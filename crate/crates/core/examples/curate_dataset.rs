//! From base-model rollouts to a curated next-state dataset: collect
//! episodes, cut them into triplets, fit the filter model on the validation
//! split, score difficulty and drop most easy triplets. Writes JSONL files
//! to a temporary directory.
//!
//! cargo run --release --example curate_dataset

use wmforge::config::RunConfig;
use wmforge::datapipe::write_jsonl;
use wmforge::pipeline::{build_base, build_suite, curate};

fn main() -> anyhow::Result<()> {
    let cfg = RunConfig::resolve(
        None,
        None,
        &[
            ("seed".into(), "5".into()),
            ("suite.n_train".into(), "16".into()),
            ("pipeline.n_rollouts".into(), "3".into()),
            ("pipeline.k_attempts".into(), "4".into()),
        ],
    )?;
    let suite = build_suite(&cfg)?;
    let base = build_base(&cfg, &suite)?.model;
    let data = curate(&cfg, &suite, &base)?;
    let easy = data.scored.iter().filter(|t| t.easy_score.unwrap_or(0.0) > cfg.pipeline.tau_easy).count();
    println!("trajectories      {}", data.trajectories.len());
    println!("triplets          {}", data.triplets.len());
    println!("train/validation  {}/{}", data.train.len(), data.validation.len());
    println!("easy              {easy}");
    println!("kept              {}", data.subsampled.len());

    let out = std::env::temp_dir().join("wmforge-examples");
    write_jsonl(&out.join("triplets.jsonl"), &data.triplets)?;
    write_jsonl(&out.join("subsampled.jsonl"), &data.subsampled)?;
    println!("wrote {}", out.display());
    if let Some(t) = data.subsampled.first() {
        println!("\nfirst kept triplet:\n{}", serde_json::to_string_pretty(t)?);
    }
    Ok(())
}
