//! Build the base model for a suite: vocabulary from everything the models
//! will read or write, then supervised training on generic text plus
//! role-format examples that carry no environment dynamics.
//!
//! cargo run --release --example pretrain_base

use wmforge::analysis::perplexity;
use wmforge::envsim::{Suite, SuiteConfig};
use wmforge::lm::LmConfig;
use wmforge::trainer::{build_vocab, format_corpus, pretrain, BaseConfig, TrainConfig};

fn main() -> anyhow::Result<()> {
    let suite = Suite::generate(&SuiteConfig::gridhouse_small(1))?;
    let base = BaseConfig { generic_docs: 120, policy_examples: 200, wm_examples: 200, seed: 1, ..Default::default() };
    let vocab = build_vocab(&suite, &base)?;
    let init = LmConfig { seed: 1, ..Default::default() }.init(vocab);
    let corpus = format_corpus(&suite, &base, 4)?;
    println!("{} tokens in vocabulary; {} training documents", init.vocab.len(), corpus.len());
    println!("sample next-state example:\n{}\n=> {}\n", corpus.last().unwrap().prompt, corpus.last().unwrap().target);

    let heldout = base.generic_heldout();
    let before = perplexity(&init, &heldout)?;
    let cfg = TrainConfig { lr: 3e-3, epochs: 3, batch_size: 32, seed: 1, ..Default::default() };
    let out = pretrain(&init, &suite, &base, &cfg)?;
    for m in out.metrics.iter().step_by(10) {
        println!("step {:>3} loss {:.3}", m.step, m.loss);
    }
    println!("held-out generic perplexity {before:.1} -> {:.1}", perplexity(&out.model, &heldout)?);
    Ok(())
}
