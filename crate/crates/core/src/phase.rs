//! Core phase arithmetic: wrapping, 1-D unwrapping, noise injection and the
//! error metrics used throughout the toolkit.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;

/// Default tolerance (radians) for [`congruence_fraction`].
pub const DEFAULT_CONGRUENCE_TOL: f64 = 1e-3;

/// Principal value of a phase in `(-π, π]`, computed as the angle of `exp(iφ)`.
///
/// Values already inside the range are returned untouched, which makes the
/// operator exactly idempotent.
#[inline]
pub fn wrap_scalar(phi: f64) -> f64 {
    if phi > -PI && phi <= PI {
        return phi;
    }
    let v = phi.sin().atan2(phi.cos());
    if v <= -PI {
        PI
    } else {
        v
    }
}

/// Converts a wrapped value to `f32` while keeping it inside `(-π, π]` as
/// seen from `f32` (rounding can land exactly on `-π` in single precision).
#[inline]
pub fn wrapped_to_f32(v: f64) -> f32 {
    let x = v as f32;
    if x <= -std::f32::consts::PI {
        std::f32::consts::PI
    } else {
        x
    }
}

/// Dense row-major grid of real phase values in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseImage {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

/// Dense row-major grid of wrapped phase values, each in `(-π, π]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrappedImage {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

fn check_grid(height: usize, width: usize, len: usize) -> Result<()> {
    if height < 2 || width < 2 {
        return Err(Error::InvalidInput(format!(
            "image must be at least 2x2, got {height}x{width}"
        )));
    }
    if height * width != len {
        return shape_err(format!(
            "{height}x{width} grid needs {} values, got {len}",
            height * width
        ));
    }
    Ok(())
}

impl PhaseImage {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        check_grid(height, width, values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite phase at index {i}")));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0.0; height * width])
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self::new(height, width, values)
    }

    pub fn from_f32(height: usize, width: usize, values: &[f32]) -> Result<Self> {
        Self::new(height, width, values.iter().map(|&v| v as f64).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn range(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Spatial (population) variance of the values.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.values.len() as f64
    }

    /// Adds a constant to every pixel.
    pub fn offset(&self, c: f64) -> PhaseImage {
        PhaseImage {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }
}

impl WrappedImage {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        check_grid(height, width, values.len())?;
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > -PI && **v <= PI))
        {
            return Err(Error::InvalidInput(format!(
                "wrapped value {v} at index {i} outside (-pi, pi]"
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    /// Builds from single-precision storage. `π_f32` sits just above `π` in
    /// double precision and is clamped back onto `π`.
    pub fn from_f32(height: usize, width: usize, values: &[f32]) -> Result<Self> {
        let widened = values
            .iter()
            .map(|&v| {
                let x = v as f64;
                if x > PI && x < PI + 1e-6 {
                    PI
                } else {
                    x
                }
            })
            .collect();
        Self::new(height, width, widened)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| wrapped_to_f32(v)).collect()
    }

    /// Reinterprets the wrapped values as a (trivially unwrapped) phase image.
    pub fn as_phase(&self) -> PhaseImage {
        PhaseImage {
            height: self.height,
            width: self.width,
            values: self.values.clone(),
        }
    }
}

/// Elementwise principal value `∠exp(iφ)`.
pub fn wrap(phase: &PhaseImage) -> WrappedImage {
    WrappedImage {
        height: phase.height,
        width: phase.width,
        values: phase.values.iter().map(|&v| wrap_scalar(v)).collect(),
    }
}

/// Wraps raw values, rejecting non-finite input.
pub fn wrap_values(values: &[f64]) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|&v| {
            if v.is_finite() {
                Ok(wrap_scalar(v))
            } else {
                Err(Error::InvalidInput("cannot wrap a non-finite phase".into()))
            }
        })
        .collect()
}

/// Classical Itoh integration of wrapped differences along a 1-D sequence.
///
/// Exact up to a global multiple of 2π whenever every true adjacent step is
/// smaller than π in magnitude.
pub fn itoh_unwrap_1d(seq: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(seq.len());
    let mut iter = seq.iter();
    let Some(&first) = iter.next() else {
        return out;
    };
    out.push(first);
    let mut prev_in = first;
    let mut prev_out = first;
    for &v in iter {
        prev_out += wrap_scalar(v - prev_in);
        prev_in = v;
        out.push(prev_out);
    }
    out
}

/// Additive white Gaussian noise at a target SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Signal-to-noise ratio in decibels; `+∞` disables noise.
    pub snr_db: f64,
    pub rng_seed: u64,
}

impl NoiseSpec {
    pub fn new(snr_db: f64, rng_seed: u64) -> Self {
        Self { snr_db, rng_seed }
    }

    /// Noise standard deviation for a signal of the given power (variance).
    pub fn sigma_for(&self, signal_power: f64) -> f64 {
        (signal_power / 10f64.powf(self.snr_db / 10.0)).sqrt()
    }
}

/// Returns `phase + g` with `g ~ N(0, σ²)` i.i.d., where
/// `σ² = var(phase) / 10^(snr_db / 10)`.
///
/// Signal power is the spatial variance of the clean phase, so large DC
/// offsets do not inflate the SNR.
pub fn add_noise(phase: &PhaseImage, spec: &NoiseSpec) -> Result<PhaseImage> {
    if spec.snr_db.is_nan() || spec.snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidInput(format!("invalid snr {}", spec.snr_db)));
    }
    if spec.snr_db == f64::INFINITY {
        return Ok(phase.clone());
    }
    let power = phase.variance();
    if power <= 0.0 {
        return Err(Error::DegenerateSignal(
            "constant phase image has zero signal power".into(),
        ));
    }
    let sigma = spec.sigma_for(power);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let values = phase
        .values
        .iter()
        .map(|&v| {
            let g: f64 = StandardNormal.sample(&mut rng);
            v + sigma * g
        })
        .collect();
    PhaseImage::new(phase.height, phase.width, values)
}

fn same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return shape_err(format!("{}x{} vs {}x{}", a.0, a.1, b.0, b.1));
    }
    Ok(())
}

/// Root-mean-square error normalized by the range of `truth`, in percent.
pub fn nrmse(pred: &PhaseImage, truth: &PhaseImage) -> Result<f64> {
    same_dims(pred.dims(), truth.dims())?;
    let range = truth.range();
    if range <= 0.0 {
        return Err(Error::DegenerateSignal(
            "truth image has zero range; NRMSE undefined".into(),
        ));
    }
    let n = pred.values.len() as f64;
    let mse = pred
        .values
        .iter()
        .zip(&truth.values)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n;
    Ok(100.0 * mse.sqrt() / range)
}

/// Shifts `pred` by the constant that minimizes its mean-squared error against
/// `truth` (the negated mean error).
pub fn remove_offset(pred: &PhaseImage, truth: &PhaseImage) -> Result<PhaseImage> {
    same_dims(pred.dims(), truth.dims())?;
    let mean_err = pred
        .values
        .iter()
        .zip(&truth.values)
        .map(|(p, t)| p - t)
        .sum::<f64>()
        / pred.values.len() as f64;
    Ok(pred.offset(-mean_err))
}

/// NRMSE after removing the best constant offset. Every member of the
/// `φ + c` family scores identically.
pub fn nrmse_offset_corrected(pred: &PhaseImage, truth: &PhaseImage) -> Result<f64> {
    nrmse(&remove_offset(pred, truth)?, truth)
}

/// Fraction of pixels where `wrap(pred)` agrees with the observation within `tol`.
pub fn congruence_fraction(pred: &PhaseImage, observed: &WrappedImage, tol: f64) -> Result<f64> {
    same_dims(pred.dims(), observed.dims())?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidInput(format!("tolerance must be > 0, got {tol}")));
    }
    let hits = pred
        .values
        .iter()
        .zip(&observed.values)
        .filter(|(p, o)| wrap_scalar(wrap_scalar(**p) - **o).abs() <= tol)
        .count();
    Ok(hits as f64 / pred.values.len() as f64)
}
