//! Weight initializers.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::Scalar;

/// He-normal: `N(0, 2 / fan_in)`.
pub fn he_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, fan_in: usize, len: usize) -> Vec<T> {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("positive std");
    (0..len).map(|_| T::cast(dist.sample(rng))).collect()
}

/// Glorot-uniform: `U(-l, l)` with `l = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    fan_in: usize,
    fan_out: usize,
    len: usize,
) -> Vec<T> {
    let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    (0..len).map(|_| T::cast(rng.random_range(-limit..=limit))).collect()
}

/// Row-major `rows × cols` matrix whose rows (if `rows <= cols`) or columns
/// (otherwise) are orthonormal. Modified Gram-Schmidt on Gaussian vectors.
pub fn orthogonal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Vec<T> {
    let (count, dim) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for q in &basis {
            let proj: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= proj * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
    }
    let mut out = vec![T::zero(); rows * cols];
    for (i, q) in basis.iter().enumerate() {
        for (j, &val) in q.iter().enumerate() {
            let idx = if rows <= cols { i * cols + j } else { j * cols + i };
            out[idx] = T::cast(val);
        }
    }
    out
}
