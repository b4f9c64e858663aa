//! Fixed-window neural language model.
//!
//! The model embeds the last `context` tokens, concatenates the embeddings,
//! applies one tanh hidden layer and a softmax output layer. Positions before
//! the start of the sequence are filled with PAD, and every sequence is
//! preceded by BOS.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::vocab::{TokenId, Vocab, BOS, PAD};
use crate::error::{Result, WmError};
use crate::util::{rng_for, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab: usize,
    pub context: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl ModelDims {
    /// Closed-form parameter count of the architecture.
    pub fn param_count(&self) -> usize {
        let Self {
            vocab: v,
            context: c,
            embed: e,
            hidden: h,
        } = *self;
        v * e + c * e * h + h + h * v + v
    }

    fn input_width(&self) -> usize {
        self.context * self.embed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub dims: ModelDims,
    pub vocab_hash: u64,
    pub seed: u64,
}

pub const TENSOR_NAMES: [&str; 5] = [
    "embedding",
    "hidden.weight",
    "hidden.bias",
    "output.weight",
    "output.bias",
];

/// The five tensors of the model; also used for gradients and optimizer
/// moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    /// [V x E]
    pub embedding: Vec<f64>,
    /// [C*E x H]
    pub hidden_w: Vec<f64>,
    /// [H]
    pub hidden_b: Vec<f64>,
    /// [H x V]
    pub output_w: Vec<f64>,
    /// [V]
    pub output_b: Vec<f64>,
}

impl Weights {
    pub fn zeros(d: &ModelDims) -> Self {
        Self {
            embedding: vec![0.0; d.vocab * d.embed],
            hidden_w: vec![0.0; d.input_width() * d.hidden],
            hidden_b: vec![0.0; d.hidden],
            output_w: vec![0.0; d.hidden * d.vocab],
            output_b: vec![0.0; d.vocab],
        }
    }

    pub fn tensors(&self) -> [(&'static str, &[f64]); 5] {
        [
            (TENSOR_NAMES[0], &self.embedding),
            (TENSOR_NAMES[1], &self.hidden_w),
            (TENSOR_NAMES[2], &self.hidden_b),
            (TENSOR_NAMES[3], &self.output_w),
            (TENSOR_NAMES[4], &self.output_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 5] {
        [
            (TENSOR_NAMES[0], &mut self.embedding),
            (TENSOR_NAMES[1], &mut self.hidden_w),
            (TENSOR_NAMES[2], &mut self.hidden_b),
            (TENSOR_NAMES[3], &mut self.output_w),
            (TENSOR_NAMES[4], &mut self.output_b),
        ]
    }

    pub fn shapes(d: &ModelDims) -> [(&'static str, Vec<usize>); 5] {
        [
            (TENSOR_NAMES[0], vec![d.vocab, d.embed]),
            (TENSOR_NAMES[1], vec![d.input_width(), d.hidden]),
            (TENSOR_NAMES[2], vec![d.hidden]),
            (TENSOR_NAMES[3], vec![d.hidden, d.vocab]),
            (TENSOR_NAMES[4], vec![d.vocab]),
        ]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened view in tensor order.
    pub fn flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    pub fn flat_get_mut(&mut self, mut index: usize) -> &mut f64 {
        for (_, t) in self.tensors_mut() {
            if index < t.len() {
                return &mut t[index];
            }
            index -= t.len();
        }
        panic!("flat index out of range");
    }

    pub fn add_scaled(&mut self, other: &Weights, scale: f64) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

/// Model parameters: weights plus the metadata needed to interpret them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub meta: ModelMeta,
    pub weights: Weights,
}

/// Per-position activations kept for the backward pass.
struct Activation {
    input: Vec<f64>,
    hidden: Vec<f64>,
    logprobs: Vec<f64>,
}

fn log_softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter_mut().for_each(|l| *l -= lse);
}

impl Params {
    /// Scaled-uniform initialization, deterministic in `seed`.
    pub fn init(vocab: &Vocab, context: usize, embed: usize, hidden: usize, seed: u64) -> Self {
        let dims = ModelDims {
            vocab: vocab.len(),
            context,
            embed,
            hidden,
        };
        let mut w = Weights::zeros(&dims);
        let mut rng = rng_for(seed, &[0x1417]);
        let fill = |t: &mut Vec<f64>, scale: f64, rng: &mut Rng| {
            t.iter_mut()
                .for_each(|x| *x = rng.gen_range(-scale..scale));
        };
        fill(&mut w.embedding, 0.5, &mut rng);
        fill(&mut w.hidden_w, 1.0 / (dims.input_width() as f64).sqrt(), &mut rng);
        fill(&mut w.output_w, 1.0 / (hidden as f64).sqrt(), &mut rng);
        Self {
            meta: ModelMeta {
                dims,
                vocab_hash: vocab.hash(),
                seed,
            },
            weights: w,
        }
    }

    /// All-zero weights: every next-token distribution is uniform.
    pub fn zeros(vocab: &Vocab, context: usize, embed: usize, hidden: usize) -> Self {
        let dims = ModelDims {
            vocab: vocab.len(),
            context,
            embed,
            hidden,
        };
        Self {
            meta: ModelMeta {
                dims,
                vocab_hash: vocab.hash(),
                seed: 0,
            },
            weights: Weights::zeros(&dims),
        }
    }

    pub fn dims(&self) -> &ModelDims {
        &self.meta.dims
    }

    /// Frozen deep copy.
    pub fn snapshot(&self) -> Params {
        self.clone()
    }

    pub fn check_vocab(&self, vocab: &Vocab) -> Result<()> {
        if vocab.hash() != self.meta.vocab_hash || vocab.len() != self.meta.dims.vocab {
            return Err(WmError::ShapeError(
                "vocabulary does not match the one the model was created with".into(),
            ));
        }
        Ok(())
    }

    fn check_ids(&self, ids: &[TokenId]) -> Result<()> {
        let v = self.meta.dims.vocab;
        match ids.iter().find(|i| **i as usize >= v) {
            Some(id) => Err(WmError::VocabMismatch {
                id: *id as usize,
                vocab_size: v,
            }),
            None => Ok(()),
        }
    }

    /// BOS + prompt, the history every completion is conditioned on.
    fn start_history(prompt: &[TokenId]) -> Vec<TokenId> {
        let mut h = Vec::with_capacity(prompt.len() + 1);
        h.push(BOS);
        h.extend_from_slice(prompt);
        h
    }

    fn window(&self, history: &[TokenId]) -> Vec<TokenId> {
        let c = self.meta.dims.context;
        let mut w = vec![PAD; c];
        let take = history.len().min(c);
        w[c - take..].copy_from_slice(&history[history.len() - take..]);
        w
    }

    fn forward(&self, window: &[TokenId]) -> Activation {
        let d = &self.meta.dims;
        let w = &self.weights;
        let mut input = Vec::with_capacity(d.input_width());
        for &tok in window {
            let row = tok as usize * d.embed;
            input.extend_from_slice(&w.embedding[row..row + d.embed]);
        }
        let mut hidden = w.hidden_b.clone();
        for (i, x) in input.iter().enumerate() {
            if *x == 0.0 {
                continue;
            }
            let row = &w.hidden_w[i * d.hidden..(i + 1) * d.hidden];
            hidden.iter_mut().zip(row).for_each(|(h, wij)| *h += x * wij);
        }
        hidden.iter_mut().for_each(|h| *h = h.tanh());
        let mut logits = w.output_b.clone();
        for (j, h) in hidden.iter().enumerate() {
            let row = &w.output_w[j * d.vocab..(j + 1) * d.vocab];
            logits.iter_mut().zip(row).for_each(|(l, wjk)| *l += h * wjk);
        }
        log_softmax_in_place(&mut logits);
        Activation {
            input,
            hidden,
            logprobs: logits,
        }
    }

    /// Log-distribution over the next token after `history`.
    pub fn next_logprobs(&self, history: &[TokenId]) -> Vec<f64> {
        self.forward(&self.window(history)).logprobs
    }

    /// Per-token log-probabilities of `completion` given `prompt`.
    pub fn logprob(&self, prompt: &[TokenId], completion: &[TokenId]) -> Result<Vec<f64>> {
        self.check_ids(prompt)?;
        self.check_ids(completion)?;
        let mut history = Self::start_history(prompt);
        let mut out = Vec::with_capacity(completion.len());
        for &y in completion {
            let lp = self.next_logprobs(&history);
            out.push(lp[y as usize]);
            history.push(y);
        }
        Ok(out)
    }

    /// Autoregressive sampling. `temperature <= 0` selects greedy argmax.
    ///
    /// Returns the sampled tokens (including `stop` if produced) and their
    /// log-probabilities under the untempered model.
    pub fn sample(
        &self,
        prompt: &[TokenId],
        temperature: f64,
        max_len: usize,
        stop: TokenId,
        rng: &mut Rng,
    ) -> (Vec<TokenId>, Vec<f64>) {
        let mut history = Self::start_history(prompt);
        let mut out = Vec::new();
        let mut lps = Vec::new();
        while out.len() < max_len {
            let lp = self.next_logprobs(&history);
            let tok = if temperature <= 0.0 {
                // First maximal index, so ties break deterministically.
                let mut best = 0;
                for (i, v) in lp.iter().enumerate() {
                    if *v > lp[best] {
                        best = i;
                    }
                }
                best
            } else {
                let scaled: Vec<f64> = lp.iter().map(|l| l / temperature).collect();
                let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let probs: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
                let total: f64 = probs.iter().sum();
                let mut x = rng.gen::<f64>() * total;
                let mut pick = probs.len() - 1;
                for (i, p) in probs.iter().enumerate() {
                    if x < *p {
                        pick = i;
                        break;
                    }
                    x -= p;
                }
                pick
            };
            out.push(tok as TokenId);
            lps.push(lp[tok]);
            history.push(tok as TokenId);
            if tok as TokenId == stop {
                break;
            }
        }
        (out, lps)
    }

    /// Accumulate `sum_t weight_t * d log p(y_t | .) / d theta` into `grad`.
    pub fn accumulate_grad_logprob(
        &self,
        prompt: &[TokenId],
        completion: &[TokenId],
        token_weights: &[f64],
        grad: &mut Weights,
    ) -> Result<()> {
        if token_weights.len() != completion.len() {
            return Err(WmError::ShapeError(format!(
                "{} weights for {} completion tokens",
                token_weights.len(),
                completion.len()
            )));
        }
        self.check_ids(prompt)?;
        self.check_ids(completion)?;
        let d = self.meta.dims;
        let w = &self.weights;
        let mut history = Self::start_history(prompt);
        let mut dlogits = vec![0.0; d.vocab];
        let mut dpre = vec![0.0; d.hidden];
        for (&y, &wt) in completion.iter().zip(token_weights) {
            if wt == 0.0 {
                history.push(y);
                continue;
            }
            let window = self.window(&history);
            let act = self.forward(&window);
            // d/dlogits of wt * log softmax(y) = wt * (onehot(y) - p)
            for (k, g) in dlogits.iter_mut().enumerate() {
                *g = -wt * act.logprobs[k].exp();
            }
            dlogits[y as usize] += wt;
            grad.output_b
                .iter_mut()
                .zip(&dlogits)
                .for_each(|(g, dl)| *g += dl);
            for j in 0..d.hidden {
                let hj = act.hidden[j];
                let row = j * d.vocab..(j + 1) * d.vocab;
                let mut dh = 0.0;
                for ((g, wjk), dl) in grad.output_w[row.clone()]
                    .iter_mut()
                    .zip(&w.output_w[row])
                    .zip(&dlogits)
                {
                    *g += hj * dl;
                    dh += wjk * dl;
                }
                dpre[j] = dh * (1.0 - hj * hj);
            }
            grad.hidden_b
                .iter_mut()
                .zip(&dpre)
                .for_each(|(g, dp)| *g += dp);
            for (i, x) in act.input.iter().enumerate() {
                let row = i * d.hidden..(i + 1) * d.hidden;
                let mut dx = 0.0;
                for ((g, wij), dp) in grad.hidden_w[row.clone()]
                    .iter_mut()
                    .zip(&w.hidden_w[row])
                    .zip(&dpre)
                {
                    *g += x * dp;
                    dx += wij * dp;
                }
                let pos = i / d.embed;
                let e = i % d.embed;
                grad.embedding[window[pos] as usize * d.embed + e] += dx;
            }
            history.push(y);
        }
        Ok(())
    }

    /// `sum_t weight_t * grad log p(y_t | .)` as a fresh gradient.
    pub fn grad_logprob(
        &self,
        prompt: &[TokenId],
        completion: &[TokenId],
        token_weights: &[f64],
    ) -> Result<Weights> {
        let mut g = Weights::zeros(&self.meta.dims);
        self.accumulate_grad_logprob(prompt, completion, token_weights, &mut g)?;
        Ok(g)
    }

    /// Mean negative log-likelihood per token and token count.
    pub fn nll(&self, prompt: &[TokenId], completion: &[TokenId]) -> Result<(f64, usize)> {
        let lp = self.logprob(prompt, completion)?;
        Ok((-lp.iter().sum::<f64>(), lp.len()))
    }
}
