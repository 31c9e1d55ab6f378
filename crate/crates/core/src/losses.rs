//! Training losses: variance of error, total variation of error, their
//! weighted sum, and plain MSE.
//!
//! With `e = pred − truth`:
//!
//! * `l_var = E[e²] − (E[e])²`
//! * `l_tv  = E|Δx e| + E|Δy e|` with forward differences, each mean taken
//!   over its `h×(w−1)` resp. `(h−1)×w` valid positions
//! * `l_c   = λ1·l_var + λ2·l_tv`
//!
//! Both components vanish for a constant error, so `l_c` does not
//! distinguish between unwrapped solutions that differ by a global offset.
//! Expectations pool over the batch and all pixels unless
//! [`Pooling::PerImage`] is selected.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::{Scalar, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::Config(format!(
                "loss weights must be non-negative, got {} and {}",
                self.lambda1, self.lambda2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// One expectation over batch and pixels.
    #[default]
    Joint,
    /// Expectation per image, then averaged over the batch.
    PerImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `λ1·l_var + λ2·l_tv`
    #[default]
    Lc,
    Mse,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Lc => "lc",
            LossKind::Mse => "mse",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lc" | "l_c" | "composite" => Ok(LossKind::Lc),
            "mse" => Ok(LossKind::Mse),
            other => Err(Error::Config(format!("unknown loss {other:?} (expected lc or mse)"))),
        }
    }
}

/// Loss value with its components (`var`/`tv` are zero for MSE).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    pub var: f64,
    pub tv: f64,
}

fn errors<T: Scalar>(pred: &Tensor4<T>, truth: &Tensor4<T>) -> Result<Vec<f64>> {
    if pred.shape() != truth.shape() {
        return shape_err(format!("loss: {:?} vs {:?}", pred.shape(), truth.shape()));
    }
    Ok(pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(p, t)| p.f64() - t.f64())
        .collect())
}

fn var_of(e: &[f64]) -> f64 {
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let sq = e.iter().map(|v| v * v).sum::<f64>() / n;
    (sq - mean * mean).max(0.0)
}

fn var_pooled(e: &[f64], shape: [usize; 4], pooling: Pooling) -> f64 {
    match pooling {
        Pooling::Joint => var_of(e),
        Pooling::PerImage => {
            let per = e.len() / shape[0];
            e.chunks(per).map(var_of).sum::<f64>() / shape[0] as f64
        }
    }
}

/// Sums of |forward differences| along x and y, plus their position counts.
fn tv_parts(e: &[f64], [n, h, w, c]: [usize; 4]) -> (f64, f64, usize, usize) {
    let idx = |b: usize, y: usize, x: usize, ch: usize| ((b * h + y) * w + x) * c + ch;
    let (mut sx, mut sy) = (0.0, 0.0);
    for b in 0..n {
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let v = e[idx(b, y, x, ch)];
                    if x + 1 < w {
                        sx += (e[idx(b, y, x + 1, ch)] - v).abs();
                    }
                    if y + 1 < h {
                        sy += (e[idx(b, y + 1, x, ch)] - v).abs();
                    }
                }
            }
        }
    }
    (sx, sy, n * h * (w - 1) * c, n * (h - 1) * w * c)
}

fn check_tv_dims(shape: [usize; 4]) -> Result<()> {
    if shape[1] < 2 || shape[2] < 2 {
        return Err(Error::InvalidInput(format!(
            "total variation needs h, w >= 2, got {}x{}",
            shape[1], shape[2]
        )));
    }
    Ok(())
}

/// Variance of the error field, pooled over batch and pixels.
pub fn l_var<T: Scalar>(pred: &Tensor4<T>, truth: &Tensor4<T>) -> Result<f64> {
    Ok(var_of(&errors(pred, truth)?))
}

/// Mean absolute x- and y-difference of the error field.
pub fn l_tv<T: Scalar>(pred: &Tensor4<T>, truth: &Tensor4<T>) -> Result<f64> {
    let e = errors(pred, truth)?;
    check_tv_dims(pred.shape())?;
    let (sx, sy, nx, ny) = tv_parts(&e, pred.shape());
    Ok(sx / nx as f64 + sy / ny as f64)
}

pub fn l_c<T: Scalar>(pred: &Tensor4<T>, truth: &Tensor4<T>, weights: &LossWeights) -> Result<f64> {
    Ok(weights.lambda1 * l_var(pred, truth)? + weights.lambda2 * l_tv(pred, truth)?)
}

pub fn mse<T: Scalar>(pred: &Tensor4<T>, truth: &Tensor4<T>) -> Result<f64> {
    let e = errors(pred, truth)?;
    Ok(e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64)
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Loss value and its gradient with respect to `pred`.
///
/// The subgradient of `|·|` at zero is taken as 0.
pub fn loss_and_grad<T: Scalar>(
    kind: LossKind,
    pred: &Tensor4<T>,
    truth: &Tensor4<T>,
    weights: &LossWeights,
    pooling: Pooling,
) -> Result<(LossValue, Tensor4<T>)> {
    let e = errors(pred, truth)?;
    let shape = pred.shape();
    let total_len = e.len();
    let mut grad = vec![0.0f64; total_len];
    let value = match kind {
        LossKind::Mse => {
            let n = total_len as f64;
            let total = e.iter().map(|v| v * v).sum::<f64>() / n;
            grad.iter_mut().zip(&e).for_each(|(g, v)| *g = 2.0 * v / n);
            LossValue {
                total,
                var: 0.0,
                tv: 0.0,
            }
        }
        LossKind::Lc => {
            check_tv_dims(shape)?;
            let var = var_pooled(&e, shape, pooling);
            let groups = match pooling {
                Pooling::Joint => 1,
                Pooling::PerImage => shape[0],
            };
            let per = total_len / groups;
            for (gs, es) in grad.chunks_mut(per).zip(e.chunks(per)) {
                let m = es.iter().sum::<f64>() / per as f64;
                let scale = weights.lambda1 * 2.0 / (per as f64 * groups as f64);
                gs.iter_mut()
                    .zip(es)
                    .for_each(|(g, v)| *g += scale * (v - m));
            }

            let (sx, sy, nx, ny) = tv_parts(&e, shape);
            let tv = sx / nx as f64 + sy / ny as f64;
            let [n, h, w, c] = shape;
            let idx = |b: usize, y: usize, x: usize, ch: usize| ((b * h + y) * w + x) * c + ch;
            let (kx, ky) = (weights.lambda2 / nx as f64, weights.lambda2 / ny as f64);
            for b in 0..n {
                for y in 0..h {
                    for x in 0..w {
                        for ch in 0..c {
                            let i = idx(b, y, x, ch);
                            if x + 1 < w {
                                let j = idx(b, y, x + 1, ch);
                                let s = kx * sign(e[j] - e[i]);
                                grad[j] += s;
                                grad[i] -= s;
                            }
                            if y + 1 < h {
                                let j = idx(b, y + 1, x, ch);
                                let s = ky * sign(e[j] - e[i]);
                                grad[j] += s;
                                grad[i] -= s;
                            }
                        }
                    }
                }
            }
            LossValue {
                total: weights.lambda1 * var + weights.lambda2 * tv,
                var,
                tv,
            }
        }
    };
    let grad = Tensor4::from_vec(
        shape[0],
        shape[1],
        shape[2],
        shape[3],
        grad.into_iter().map(T::cast).collect(),
    )?;
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field(n: usize, h: usize, w: usize, f: impl Fn(usize, usize, usize) -> f64) -> Tensor4<f64> {
        Tensor4::from_fn(n, h, w, 1, |b, y, x, _| f(b, y, x))
    }

    fn random(rng: &mut ChaCha8Rng, n: usize, h: usize, w: usize) -> Tensor4<f64> {
        Tensor4::from_fn(n, h, w, 1, |_, _, _, _| rng.random_range(-5.0..5.0))
    }

    #[test]
    fn constant_error_costs_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = random(&mut rng, 2, 5, 6);
        let pred = truth.map(|v| v + 3.7);
        assert!(l_var(&pred, &truth).unwrap().abs() < 1e-12);
        assert!(l_tv(&pred, &truth).unwrap().abs() < 1e-12);
        assert!(l_c(&pred, &truth, &LossWeights::default()).unwrap().abs() < 1e-12);
        assert!((mse(&pred, &truth).unwrap() - 3.7 * 3.7).abs() < 1e-9);
    }

    #[test]
    fn alternating_error_has_unit_variance() {
        let truth = field(1, 4, 4, |_, _, _| 0.0);
        let pred = field(1, 4, 4, |_, y, x| if (y + x) % 2 == 0 { 0.0 } else { 2.0 });
        assert!((l_var(&pred, &truth).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_ramp_along_x() {
        let truth = field(2, 5, 7, |b, y, x| (b + y * x) as f64);
        let pred = field(2, 5, 7, |b, y, x| (b + y * x) as f64 + x as f64);
        assert!((l_tv(&pred, &truth).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_sum() {
        // Error with var 1 (alternating rows of 0 and 2) has |Δy| = 2, |Δx| = 0.
        let truth = field(1, 4, 4, |_, _, _| 0.0);
        let pred = field(1, 4, 4, |_, y, _| if y % 2 == 0 { 0.0 } else { 2.0 });
        let v = l_var(&pred, &truth).unwrap();
        let t = l_tv(&pred, &truth).unwrap();
        assert!((v - 1.0).abs() < 1e-12 && (t - 2.0).abs() < 1e-12);
        let lc = l_c(&pred, &truth, &LossWeights::default()).unwrap();
        assert!((lc - 1.2).abs() < 1e-12);
        assert_eq!(LossWeights::default(), LossWeights { lambda1: 1.0, lambda2: 0.1 });
    }

    #[test]
    fn matches_direct_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let (n, h, w) = (rng.random_range(1..4), rng.random_range(2..7), rng.random_range(2..7));
            let pred = random(&mut rng, n, h, w);
            let truth = random(&mut rng, n, h, w);
            let e: Vec<f64> = pred.data().iter().zip(truth.data()).map(|(a, b)| a - b).collect();

            // Two-pass variance.
            let m = e.iter().sum::<f64>() / e.len() as f64;
            let var = e.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / e.len() as f64;
            let got = l_var(&pred, &truth).unwrap();
            assert!((got - var).abs() <= 1e-5 * var.abs().max(1e-12));

            // Nested-loop total variation.
            let at = |b: usize, y: usize, x: usize| e[(b * h + y) * w + x];
            let (mut sx, mut sy) = (0.0, 0.0);
            for b in 0..n {
                for y in 0..h {
                    for x in 0..w - 1 {
                        sx += (at(b, y, x + 1) - at(b, y, x)).abs();
                    }
                }
                for y in 0..h - 1 {
                    for x in 0..w {
                        sy += (at(b, y + 1, x) - at(b, y, x)).abs();
                    }
                }
            }
            let tv = sx / (n * h * (w - 1)) as f64 + sy / (n * (h - 1) * w) as f64;
            assert!((l_tv(&pred, &truth).unwrap() - tv).abs() < 1e-6);

            let mse_ref = e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64;
            assert!((mse(&pred, &truth).unwrap() - mse_ref).abs() < 1e-6);
            // var = mse − (mean error)².
            assert!((got - (mse_ref - m * m)).abs() < 1e-9);
        }
    }

    #[test]
    fn errors_on_bad_shapes() {
        let a = field(1, 3, 3, |_, _, _| 0.0);
        let b = field(1, 3, 4, |_, _, _| 0.0);
        assert!(l_var(&a, &b).is_err());
        assert!(mse(&a, &b).is_err());
        let thin = field(1, 1, 4, |_, _, _| 0.0);
        assert!(l_tv(&thin, &thin).is_err());
        assert!("huber".parse::<LossKind>().is_err());
        assert!(LossWeights { lambda1: -1.0, lambda2: 0.0 }.validate().is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for kind in [LossKind::Lc, LossKind::Mse] {
            for pooling in [Pooling::Joint, Pooling::PerImage] {
                let pred = random(&mut rng, 2, 4, 5);
                let truth = random(&mut rng, 2, 4, 5);
                let w = LossWeights::default();
                let (_, g) = loss_and_grad(kind, &pred, &truth, &w, pooling).unwrap();
                let h = 1e-6;
                for i in 0..pred.data().len() {
                    let mut p = pred.clone();
                    p.data_mut()[i] += h;
                    let lp = loss_and_grad(kind, &p, &truth, &w, pooling).unwrap().0.total;
                    p.data_mut()[i] -= 2.0 * h;
                    let lm = loss_and_grad(kind, &p, &truth, &w, pooling).unwrap().0.total;
                    let fd = (lp - lm) / (2.0 * h);
                    assert!((fd - g.data()[i]).abs() < 1e-6, "{kind:?} {pooling:?} {i}: {fd} vs {}", g.data()[i]);
                }
            }
        }
    }

    #[test]
    fn per_image_pooling_ignores_per_image_offsets() {
        let truth = field(2, 3, 3, |_, y, x| (y * 3 + x) as f64);
        let pred = field(2, 3, 3, |b, y, x| (y * 3 + x) as f64 + if b == 0 { 5.0 } else { -1.0 });
        let w = LossWeights::default();
        let joint = loss_and_grad(LossKind::Lc, &pred, &truth, &w, Pooling::Joint).unwrap().0;
        let per = loss_and_grad(LossKind::Lc, &pred, &truth, &w, Pooling::PerImage).unwrap().0;
        assert!(joint.total > 1.0);
        assert!(per.total.abs() < 1e-12);
    }
}
