//! Adam with bias-corrected moment estimates.

use serde::{Deserialize, Serialize};

use super::{Param, Scalar};
use crate::error::{shape_err, Result};

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
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update of `theta` in place. `t` is the 1-based step count.
pub fn adam_update<T: Scalar>(
    theta: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    t: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    if theta.len() != grad.len() || m.len() != grad.len() || v.len() != grad.len() {
        return shape_err(format!(
            "adam: parameter {} / gradient {} / state {} lengths differ",
            theta.len(),
            grad.len(),
            m.len()
        ));
    }
    let b1 = T::cast(cfg.beta1);
    let b2 = T::cast(cfg.beta2);
    let c1 = T::cast(1.0 - cfg.beta1.powi(t as i32));
    let c2 = T::cast(1.0 - cfg.beta2.powi(t as i32));
    let lr = T::cast(cfg.lr);
    let eps = T::cast(cfg.eps);
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g;
        v[i] = b2 * v[i] + (T::one() - b2) * g * g;
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        theta[i] = theta[i] - lr * mhat / (vhat.sqrt() + eps);
    }
    Ok(())
}

/// Optimizer state for an ordered list of parameters.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update to every trainable parameter using its `grad`.
    /// Moment buffers are allocated on the first call; later calls must pass
    /// parameters of identical shapes in identical order.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        let trainable: Vec<&mut &mut Param<T>> =
            params.iter_mut().filter(|p| p.trainable).collect();
        if self.t == 0 && self.m.is_empty() {
            self.m = trainable.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.v = self.m.clone();
        }
        if trainable.len() != self.m.len() {
            return shape_err(format!(
                "adam: {} trainable parameters, state holds {}",
                trainable.len(),
                self.m.len()
            ));
        }
        self.t += 1;
        for ((p, m), v) in trainable.into_iter().zip(&mut self.m).zip(&mut self.v) {
            let Param { value, grad, .. } = &mut **p;
            adam_update(value, grad, m, v, self.t, &self.config)?;
        }
        Ok(())
    }
}
