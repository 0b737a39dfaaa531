use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Moment accumulators for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Tensor2>,
    second: Vec<Tensor2>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[&Tensor2]) -> Self {
        let zeros = |t: &&Tensor2| Tensor2::zeros(t.rows(), t.cols());
        Self {
            config,
            first: params.iter().map(zeros).collect(),
            second: params.iter().map(zeros).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Gradients are zeroed afterwards.
    ///
    /// Nothing is modified when any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Tensor2], grads: &mut [Tensor2]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::dim(
                "adam_step",
                format!(
                    "{} params, {} grads, {} accumulators",
                    params.len(),
                    grads.len(),
                    self.first.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads.iter()).enumerate() {
            if !p.same_shape(g) || !p.same_shape(&self.first[i]) {
                return Err(Error::dim(
                    "adam_step",
                    format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape()),
                ));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter {i}")));
            }
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter_mut())
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let pd = p.data_mut();
            for (j, &gj) in g.data().iter().enumerate() {
                let mj = &mut m.data_mut()[j];
                *mj = beta1 * *mj + (1.0 - beta1) * gj;
                let mhat = *mj / bc1;
                let vj = &mut v.data_mut()[j];
                *vj = beta2 * *vj + (1.0 - beta2) * gj * gj;
                let vhat = *vj / bc2;
                pd[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
            g.fill(0.0);
        }
        Ok(())
    }
}
