//! Per-channel batch normalization.

use super::{missing_cache, Layer, Mode, Param, Scalar, Tensor4};
use crate::error::{shape_err, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub channels: usize,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    cache: Option<Cache<T>>,
}

#[derive(Debug, Clone)]
enum Cache<T> {
    Train { xhat: Vec<T>, inv_std: Vec<f64> },
    Infer,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        let ones = vec![T::one(); channels];
        Self {
            channels,
            gamma: Param::new(format!("{name}.gamma"), vec![channels], ones.clone()),
            beta: Param::zeros(format!("{name}.beta"), vec![channels]),
            running_mean: Param::zeros(format!("{name}.running_mean"), vec![channels]).frozen(),
            running_var: Param::new(format!("{name}.running_var"), vec![channels], ones).frozen(),
            cache: None,
        }
    }
}

impl<T: Scalar> Layer<T> for BatchNorm<T> {
    fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        let c = self.channels;
        if x.c() != c {
            return shape_err(format!(
                "{}: expected {c} channels, got {}",
                self.gamma.name,
                x.c()
            ));
        }
        let count = x.data().len() / c;
        let mut out = x.clone();
        match mode {
            Mode::Train => {
                let mut mean = vec![0.0f64; c];
                for px in x.data().chunks(c) {
                    for (m, v) in mean.iter_mut().zip(px) {
                        *m += v.f64();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= count as f64);
                let mut var = vec![0.0f64; c];
                for px in x.data().chunks(c) {
                    for ((s, v), m) in var.iter_mut().zip(px).zip(&mean) {
                        let d = v.f64() - m;
                        *s += d * d;
                    }
                }
                var.iter_mut().for_each(|s| *s /= count as f64);
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                let mut xhat = vec![T::zero(); x.data().len()];
                for (px, (hx, o)) in x
                    .data()
                    .chunks(c)
                    .zip(xhat.chunks_mut(c).zip(out.data_mut().chunks_mut(c)))
                {
                    for ch in 0..c {
                        let nv = T::cast((px[ch].f64() - mean[ch]) * inv_std[ch]);
                        hx[ch] = nv;
                        o[ch] = self.gamma.value[ch] * nv + self.beta.value[ch];
                    }
                }
                let unbias = if count > 1 {
                    count as f64 / (count as f64 - 1.0)
                } else {
                    1.0
                };
                for ch in 0..c {
                    let rm = self.running_mean.value[ch].f64();
                    let rv = self.running_var.value[ch].f64();
                    self.running_mean.value[ch] =
                        T::cast(BN_MOMENTUM * rm + (1.0 - BN_MOMENTUM) * mean[ch]);
                    self.running_var.value[ch] =
                        T::cast(BN_MOMENTUM * rv + (1.0 - BN_MOMENTUM) * var[ch] * unbias);
                }
                self.cache = Some(Cache::Train { xhat, inv_std });
            }
            Mode::Infer => {
                let scale: Vec<T> = (0..c)
                    .map(|ch| {
                        self.gamma.value[ch]
                            / T::cast((self.running_var.value[ch].f64() + BN_EPS).sqrt())
                    })
                    .collect();
                for o in out.data_mut().chunks_mut(c) {
                    for ch in 0..c {
                        o[ch] = (o[ch] - self.running_mean.value[ch]) * scale[ch] + self.beta.value[ch];
                    }
                }
                self.cache = Some(Cache::Infer);
            }
        }
        Ok(out)
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let c = self.channels;
        if dy.c() != c {
            return shape_err("batch norm backward: channel mismatch");
        }
        let mut dx = dy.clone();
        match self.cache.as_ref() {
            Some(Cache::Train { xhat, inv_std }) => {
                if xhat.len() != dy.data().len() {
                    return shape_err("batch norm backward: upstream size mismatch");
                }
                let count = (xhat.len() / c) as f64;
                let mut sum_dy = vec![0.0f64; c];
                let mut sum_dy_xhat = vec![0.0f64; c];
                for (g, hx) in dy.data().chunks(c).zip(xhat.chunks(c)) {
                    for ch in 0..c {
                        sum_dy[ch] += g[ch].f64();
                        sum_dy_xhat[ch] += g[ch].f64() * hx[ch].f64();
                    }
                }
                for ch in 0..c {
                    self.gamma.grad[ch] = self.gamma.grad[ch] + T::cast(sum_dy_xhat[ch]);
                    self.beta.grad[ch] = self.beta.grad[ch] + T::cast(sum_dy[ch]);
                }
                for (d, hx) in dx.data_mut().chunks_mut(c).zip(xhat.chunks(c)) {
                    for ch in 0..c {
                        let gamma = self.gamma.value[ch].f64();
                        let v = gamma * inv_std[ch] / count
                            * (count * d[ch].f64() - sum_dy[ch] - hx[ch].f64() * sum_dy_xhat[ch]);
                        d[ch] = T::cast(v);
                    }
                }
            }
            Some(Cache::Infer) => {
                let scale: Vec<f64> = (0..c)
                    .map(|ch| self.gamma.value[ch].f64() / (self.running_var.value[ch].f64() + BN_EPS).sqrt())
                    .collect();
                for d in dx.data_mut().chunks_mut(c) {
                    for (v, s) in d.iter_mut().zip(&scale) {
                        *v = T::cast(v.f64() * s);
                    }
                }
            }
            None => return missing_cache("batch norm"),
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta, &self.running_mean, &self.running_var]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![
            &mut self.gamma,
            &mut self.beta,
            &mut self.running_mean,
            &mut self.running_var,
        ]
    }
}
