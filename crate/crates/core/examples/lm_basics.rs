//! The language model on its own: build a vocabulary, fit a few sentences
//! with supervised training, sample from it, and round-trip a checkpoint.
//!
//! cargo run --release --example lm_basics

use wmforge::lm::{LmConfig, Model, Vocab, EOS};
use wmforge::trainer::{sft_train, SftExample, TrainConfig};
use wmforge::util::rng_for;

fn main() -> anyhow::Result<()> {
    let pairs = [
        ("go to fridge 1", "You arrive at fridge 1."),
        ("open fridge 1", "You open the fridge 1."),
        ("go to drawer 2", "You arrive at drawer 2."),
        ("fly away", "Nothing happens."),
    ];
    let texts: Vec<String> = pairs.iter().flat_map(|(a, b)| [a.to_string(), format!(" {b}")]).collect();
    let vocab = Vocab::build(&texts);
    let model = LmConfig { context: 8, embed: 16, hidden: 64, seed: 1 }.init(vocab);
    println!("vocabulary {} tokens, {} parameters", model.vocab.len(), model.params.weights.len());

    let data: Vec<SftExample> = pairs.iter().map(|(a, b)| SftExample::new(*a, format!(" {b}"))).collect();
    let cfg = TrainConfig { lr: 1e-2, epochs: 150, batch_size: 4, ..Default::default() };
    let out = sft_train(&model, &data, &cfg)?;
    println!(
        "loss {:.3} -> {:.3} over {} steps",
        out.metrics[0].loss,
        out.metrics.last().unwrap().loss,
        out.metrics.len()
    );

    let mut rng = rng_for(0, &[]);
    for (prompt, _) in &pairs {
        let ids = out.model.vocab.encode(prompt);
        let (greedy, _) = out.model.params.sample(&ids, 0.0, 12, EOS, &mut rng);
        let (hot, lp) = out.model.params.sample(&ids, 1.0, 12, EOS, &mut rng);
        println!(
            "{prompt:>15} -> greedy {:?} | sampled {:?} (logprob {:.2})",
            out.model.vocab.decode(&greedy),
            out.model.vocab.decode(&hot),
            lp.iter().sum::<f64>()
        );
    }

    let dir = tempfile_dir()?;
    let path = dir.join("lm_basics.json");
    out.model.save(&path)?;
    let back = Model::load(&path)?;
    println!("checkpoint round trip identical: {}", back == out.model);
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let d = std::env::temp_dir().join("wmforge-examples");
    std::fs::create_dir_all(&d)?;
    Ok(d)
}
