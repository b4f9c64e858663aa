//! GRPO on a one-step bandit: a single-token completion out of twenty, one of
//! which is rewarded. Prints how the greedy choice and the probability of
//! the rewarded token evolve.
//!
//! cargo run --release --example grpo_bandit

use wmforge::lm::{Adam, AdamConfig, Params, Vocab};
use wmforge::trainer::{grpo_step, TrainConfig};

fn main() -> anyhow::Result<()> {
    let words = [
        "apple", "bread", "cup", "dish", "egg", "fork", "grape", "honey", "ink", "jar", "kettle", "lemon",
    ];
    let vocab = Vocab::build(&words);
    assert_eq!(vocab.len(), 20);
    let target = vocab.id("honey").expect("token exists");
    let mut params = Params::init(&vocab, 2, 8, 16, 3);
    let reference = params.snapshot();
    let cfg = TrainConfig { lr: 0.02, group_size: 8, max_new_tokens: 1, kl_coef: 0.0, ..Default::default() };
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr), params.dims());
    let prompts = vec![vec![]];
    for step in 0..300 {
        let old = params.snapshot();
        let (stats, _) = grpo_step(
            &mut params,
            &mut opt,
            &old,
            &reference,
            &prompts,
            &cfg,
            |_, c: &[u32]| (c.first() == Some(&target)) as u8 as f64,
            step,
        )?;
        let lp = params.next_logprobs(&[wmforge::lm::BOS]);
        let argmax = (0..lp.len()).max_by(|&a, &b| lp[a].total_cmp(&lp[b])).unwrap() as u32;
        if step % 20 == 0 || argmax == target {
            println!(
                "step {step:>3} mean reward {:.3} p(target) {:.3} greedy {}",
                stats.mean_reward,
                lp[target as usize].exp(),
                vocab.token(argmax).unwrap_or("?")
            );
        }
        if argmax == target {
            println!("greedy choice is the rewarded token after {} steps", step + 1);
            break;
        }
    }
    Ok(())
}
