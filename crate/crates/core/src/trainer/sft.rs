use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{StepMetrics, TrainConfig, TrainOutput};
use crate::error::{Result, WmError};
use crate::lm::{Adam, AdamConfig, Model, TokenSeq, Weights, EOS};
use crate::util::rng_for;

/// A prompt and the text the model should continue it with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftExample {
    pub prompt: String,
    pub target: String,
}

impl SftExample {
    pub fn new(prompt: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            target: target.into(),
        }
    }
}

/// Token cross-entropy on the target segment only; the prompt conditions
/// but is not scored. Targets are terminated with EOS.
pub fn sft_train(model: &Model, data: &[SftExample], cfg: &TrainConfig) -> Result<TrainOutput> {
    if data.is_empty() {
        return Err(WmError::EmptyDataset("supervised dataset".into()));
    }
    let encoded: Vec<(TokenSeq, TokenSeq)> = data
        .iter()
        .map(|ex| {
            let mut target = model.vocab.encode(&ex.target);
            target.push(EOS);
            (model.vocab.encode(&ex.prompt), target)
        })
        .collect();
    let mut out = model.clone();
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr), out.params.dims());
    let mut metrics = Vec::new();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..encoded.len()).collect();
        order.shuffle(&mut rng_for(cfg.seed, &[0x5f7, epoch as u64]));
        for batch in order.chunks(cfg.batch_size) {
            let params = &out.params;
            let parts: Vec<(Weights, f64, usize)> = batch
                .par_iter()
                .map(|&i| {
                    let (p, c) = &encoded[i];
                    let (nll, n) = params.nll(p, c)?;
                    let g = params.grad_logprob(p, c, &vec![1.0; c.len()])?;
                    Ok((g, nll, n))
                })
                .collect::<Result<_>>()?;
            let mut grad = Weights::zeros(params.dims());
            let mut nll = 0.0;
            let mut ntok = 0;
            for (g, l, n) in &parts {
                grad.add_scaled(g, 1.0);
                nll += l;
                ntok += n;
            }
            let scale = 1.0 / ntok.max(1) as f64;
            grad.scale(scale);
            let loss = nll * scale;
            if !loss.is_finite() {
                return Err(WmError::NumericalError(format!("non-finite loss at step {step}")));
            }
            opt.step(&mut out.params.weights, &grad)?;
            metrics.push(StepMetrics {
                step,
                mean_reward: None,
                kl: None,
                clip_frac: None,
                loss,
            });
            step += 1;
        }
    }
    Ok(TrainOutput {
        model: out,
        metrics,
        dataset_size: data.len(),
    })
}
