//! Single-layer LSTM over batched sequences with full backpropagation
//! through time.
//!
//! Gate layout along the `4u` axis is `(input, forget, candidate, output)`:
//!
//! ```text
//! z   = x·Wx + h_{t-1}·Wh + b
//! i,f,o = σ(z_i), σ(z_f), σ(z_o);  g = tanh(z_g)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ```
//!
//! Hidden and cell states start at zero.

use rand::Rng;

use super::{init, matmul, missing_cache, Mode, Param, Scalar};
use crate::error::{shape_err, Result};

#[derive(Debug, Clone)]
pub struct Lstm<T> {
    pub input_dim: usize,
    pub units: usize,
    /// `[input_dim, 4u]`
    pub w_x: Param<T>,
    /// `[u, 4u]`
    pub w_h: Param<T>,
    /// `[4u]`
    pub bias: Param<T>,
    cache: Option<Cache<T>>,
}

#[derive(Debug, Clone)]
struct Cache<T> {
    n: usize,
    len: usize,
    x: Vec<T>,
    /// Activated gates per `(b, t)` row.
    gates: Vec<T>,
    tanh_c: Vec<T>,
    h_prev: Vec<T>,
    c_prev: Vec<T>,
}

#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

impl<T: Scalar> Lstm<T> {
    pub fn zeros(name: &str, input_dim: usize, units: usize) -> Self {
        Self {
            input_dim,
            units,
            w_x: Param::zeros(format!("{name}.w_x"), vec![input_dim, 4 * units]),
            w_h: Param::zeros(format!("{name}.w_h"), vec![units, 4 * units]),
            bias: Param::zeros(format!("{name}.bias"), vec![4 * units]),
            cache: None,
        }
    }

    /// Glorot-uniform input weights, orthogonal recurrent weights, zero bias
    /// except the forget gate which starts at 1.
    pub fn init<R: Rng + ?Sized>(name: &str, input_dim: usize, units: usize, rng: &mut R) -> Self {
        let mut l = Self::zeros(name, input_dim, units);
        l.w_x.value = init::glorot_uniform(rng, input_dim, 4 * units, l.w_x.len());
        l.w_h.value = init::orthogonal(rng, units, 4 * units);
        for v in &mut l.bias.value[units..2 * units] {
            *v = T::one();
        }
        l
    }

    /// Runs `n` sequences of length `len` stored `[n, len, input_dim]`;
    /// returns `[n, len, units]`.
    pub fn forward_batch(&mut self, x: &[T], n: usize, len: usize, mode: Mode) -> Result<Vec<T>> {
        let (c, u) = (self.input_dim, self.units);
        if x.len() != n * len * c {
            return shape_err(format!(
                "lstm: expected {n}x{len}x{c} inputs, got {}",
                x.len()
            ));
        }
        let rows = n * len;
        let g4 = 4 * u;
        let mut xw = vec![T::zero(); rows * g4];
        matmul(rows, c, g4, x, false, &self.w_x.value, false, &mut xw, false);

        let train = mode == Mode::Train;
        let mut out = vec![T::zero(); rows * u];
        let mut gates = if train { vec![T::zero(); rows * g4] } else { Vec::new() };
        let mut tanh_all = if train { vec![T::zero(); rows * u] } else { Vec::new() };
        let mut h_prev_all = if train { vec![T::zero(); rows * u] } else { Vec::new() };
        let mut c_prev_all = if train { vec![T::zero(); rows * u] } else { Vec::new() };

        let mut h = vec![T::zero(); n * u];
        let mut cell = vec![T::zero(); n * u];
        let mut z = vec![T::zero(); n * g4];
        for t in 0..len {
            for b in 0..n {
                let r = b * len + t;
                z[b * g4..(b + 1) * g4].copy_from_slice(&xw[r * g4..(r + 1) * g4]);
            }
            matmul(n, u, g4, &h, false, &self.w_h.value, false, &mut z, true);
            for b in 0..n {
                let r = b * len + t;
                let zb = &mut z[b * g4..(b + 1) * g4];
                for (zv, &bv) in zb.iter_mut().zip(&self.bias.value) {
                    *zv = *zv + bv;
                }
                if train {
                    h_prev_all[r * u..(r + 1) * u].copy_from_slice(&h[b * u..(b + 1) * u]);
                    c_prev_all[r * u..(r + 1) * u].copy_from_slice(&cell[b * u..(b + 1) * u]);
                }
                for k in 0..u {
                    let i = sigmoid(zb[k]);
                    let f = sigmoid(zb[u + k]);
                    let g = zb[2 * u + k].tanh();
                    let o = sigmoid(zb[3 * u + k]);
                    let cv = f * cell[b * u + k] + i * g;
                    let tc = cv.tanh();
                    let hv = o * tc;
                    cell[b * u + k] = cv;
                    h[b * u + k] = hv;
                    out[r * u + k] = hv;
                    if train {
                        gates[r * g4 + k] = i;
                        gates[r * g4 + u + k] = f;
                        gates[r * g4 + 2 * u + k] = g;
                        gates[r * g4 + 3 * u + k] = o;
                        tanh_all[r * u + k] = tc;
                    }
                }
            }
        }
        self.cache = train.then(|| Cache {
            n,
            len,
            x: x.to_vec(),
            gates,
            tanh_c: tanh_all,
            h_prev: h_prev_all,
            c_prev: c_prev_all,
        });
        Ok(out)
    }

    /// Backpropagation through time. `dy` is `[n, len, units]`; returns the
    /// input gradient `[n, len, input_dim]`.
    pub fn backward_batch(&mut self, dy: &[T]) -> Result<Vec<T>> {
        let Some(cache) = self.cache.as_ref() else {
            return missing_cache("lstm");
        };
        let u = self.units;
        let (n, len) = (cache.n, cache.len);
        let rows = n * len;
        let g4 = 4 * u;
        if dy.len() != rows * u {
            return shape_err("lstm backward: upstream size mismatch");
        }
        let mut dz_all = vec![T::zero(); rows * g4];
        let mut dh_next = vec![T::zero(); n * u];
        let mut dc_next = vec![T::zero(); n * u];
        let mut dz_t = vec![T::zero(); n * g4];
        for t in (0..len).rev() {
            for b in 0..n {
                let r = b * len + t;
                let gt = &cache.gates[r * g4..(r + 1) * g4];
                for k in 0..u {
                    let (i, f, g, o) = (gt[k], gt[u + k], gt[2 * u + k], gt[3 * u + k]);
                    let tc = cache.tanh_c[r * u + k];
                    let dh = dy[r * u + k] + dh_next[b * u + k];
                    let d_o = dh * tc;
                    let dc = dh * o * (T::one() - tc * tc) + dc_next[b * u + k];
                    let di = dc * g;
                    let dg = dc * i;
                    let df = dc * cache.c_prev[r * u + k];
                    dc_next[b * u + k] = dc * f;
                    let row = &mut dz_t[b * g4..(b + 1) * g4];
                    row[k] = di * i * (T::one() - i);
                    row[u + k] = df * f * (T::one() - f);
                    row[2 * u + k] = dg * (T::one() - g * g);
                    row[3 * u + k] = d_o * o * (T::one() - o);
                }
                dz_all[r * g4..(r + 1) * g4].copy_from_slice(&dz_t[b * g4..(b + 1) * g4]);
            }
            matmul(n, g4, u, &dz_t, false, &self.w_h.value, true, &mut dh_next, false);
        }
        for row in dz_all.chunks(g4) {
            self.bias
                .grad
                .iter_mut()
                .zip(row)
                .for_each(|(g, &d)| *g = *g + d);
        }
        matmul(u, rows, g4, &cache.h_prev, true, &dz_all, false, &mut self.w_h.grad, true);
        matmul(self.input_dim, rows, g4, &cache.x, true, &dz_all, false, &mut self.w_x.grad, true);
        let mut dx = vec![T::zero(); rows * self.input_dim];
        matmul(rows, g4, self.input_dim, &dz_all, false, &self.w_x.value, true, &mut dx, false);
        Ok(dx)
    }

    /// Inference over one sequence of feature vectors.
    pub fn forward_seq(&mut self, seq: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        if seq.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(bad) = seq.iter().position(|s| s.len() != self.input_dim) {
            return shape_err(format!(
                "lstm: step {bad} has dimension {}, expected {}",
                seq[bad].len(),
                self.input_dim
            ));
        }
        let flat: Vec<T> = seq.iter().flatten().copied().collect();
        let out = self.forward_batch(&flat, 1, seq.len(), Mode::Infer)?;
        Ok(out.chunks(self.units).map(|c| c.to_vec()).collect())
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.w_x, &self.w_h, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.w_x, &mut self.w_h, &mut self.bias]
    }
}
