use serde::{Deserialize, Serialize};

use super::model::{ModelDims, Weights};
use crate::error::{Result, WmError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. `step` moves parameters along `direction`
/// (i.e. it ascends); pass a negated loss gradient to minimize.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Weights,
    v: Weights,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, dims: &ModelDims) -> Self {
        Self {
            config,
            m: Weights::zeros(dims),
            v: Weights::zeros(dims),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut Weights, direction: &Weights) -> Result<()> {
        if !direction.all_finite() {
            return Err(WmError::NumericalError("non-finite gradient".into()));
        }
        if direction.len() != params.len() {
            return Err(WmError::ShapeError("gradient and parameter sizes differ".into()));
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(direction.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for ((((_, p), (_, g)), (_, m)), (_, v)) in tensors {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] += lr * mhat / (vhat.sqrt() + eps);
            }
        }
        if !params.all_finite() {
            return Err(WmError::NumericalError("parameters became non-finite".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> ModelDims {
        ModelDims {
            vocab: 1,
            context: 1,
            embed: 1,
            hidden: 1,
        }
    }

    #[test]
    fn first_step_hand_value() {
        let d = dims();
        let mut p = Weights::zeros(&d);
        p.output_b[0] = 1.0;
        let mut g = Weights::zeros(&d);
        // Descending on loss gradient 0.5 means ascending along -0.5.
        g.output_b[0] = -0.5;
        let mut opt = Adam::new(AdamConfig::with_lr(0.1), &d);
        opt.step(&mut p, &g).unwrap();
        let expected = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((p.output_b[0] - expected).abs() < 1e-12);
        assert!((p.output_b[0] - 0.9).abs() < 1e-7);
        assert_eq!(p.embedding[0], 0.0);
    }

    #[test]
    fn rejects_non_finite() {
        let d = dims();
        let mut p = Weights::zeros(&d);
        let mut g = Weights::zeros(&d);
        g.hidden_b[0] = f64::NAN;
        let mut opt = Adam::new(AdamConfig::default(), &d);
        assert!(matches!(opt.step(&mut p, &g), Err(WmError::NumericalError(_))));
        assert_eq!(opt.steps(), 0);
    }
}
