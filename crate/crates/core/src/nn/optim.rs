//! AdamW with decoupled weight decay and bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for a flat parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(config: AdamWConfig, param_count: usize) -> Self {
        Self {
            config,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step: 0,
        }
    }

    /// One AdamW step over parameter segments laid out back to back.
    ///
    /// `grads[k] = None` leaves segment `k` untouched (no decay, no moment
    /// update), the behavior of a parameter that received no gradient.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[Option<&[f64]>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape("adamw segments", params.len(), grads.len()));
        }
        let total: usize = params.iter().map(|p| p.len()).sum();
        if total != self.first_moment.len() {
            return Err(Error::shape("adamw state", self.first_moment.len(), total));
        }
        for (p, g) in params.iter().zip(grads) {
            if let Some(g) = g {
                if g.len() != p.len() {
                    return Err(Error::shape("adamw gradient segment", p.len(), g.len()));
                }
            }
        }

        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        let decay = 1.0 - c.learning_rate * c.weight_decay;

        let mut offset = 0;
        for (segment, grad) in params.into_iter().zip(grads) {
            let len = segment.len();
            if let Some(grad) = grad {
                let m = &mut self.first_moment[offset..offset + len];
                let v = &mut self.second_moment[offset..offset + len];
                for i in 0..len {
                    let g = grad[i];
                    segment[i] *= decay;
                    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
                    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
                    let m_hat = m[i] / bias1;
                    let v_hat = v[i] / bias2;
                    segment[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.eps);
                }
            }
            offset += len;
        }
        Ok(())
    }
}
