//! Synthetic phase surfaces (signed Gaussian mixtures plus planar ramps) and
//! the on-disk dataset format.
//!
//! A dataset directory holds `manifest.json` and two flat files,
//! `wrapped.bin` and `truth.bin`, of little-endian `f32` values stored image
//! after image in row-major order.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor4;
use crate::phase::{add_noise, wrap_scalar, wrapped_to_f32, NoiseSpec, PhaseImage, WrappedImage};

pub const DATASET_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WRAPPED_FILE: &str = "wrapped.bin";
pub const TRUTH_FILE: &str = "truth.bin";

/// SNR levels (dB) used for the noisy datasets.
pub const DEFAULT_NOISE_MENU: [f64; 5] = [0.0, 5.0, 10.0, 20.0, 60.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub image_size: usize,
    pub count: usize,
    /// Inclusive range for the number of Gaussians.
    pub n_gaussians_range: [usize; 2],
    /// Magnitude range; the sign is drawn separately.
    pub amplitude_range: [f64; 2],
    /// Per-axis standard deviation, pixels.
    pub sigma_range: [f64; 2],
    /// Ramp slope along each axis, radians per pixel.
    pub slope_range: [f64; 2],
    pub value_range_target: [f64; 2],
    /// SNR levels in dB; empty means noise-free.
    pub noise_menu: Vec<f64>,
    pub seed: u64,
}

impl Default for GenConfig {
    /// 6000 images of 256×256 with values inside [-44, 44].
    fn default() -> Self {
        Self {
            image_size: 256,
            count: 6000,
            n_gaussians_range: [3, 12],
            amplitude_range: [5.0, 25.0],
            sigma_range: [12.0, 90.0],
            slope_range: [-0.06, 0.06],
            value_range_target: [-44.0, 44.0],
            noise_menu: Vec::new(),
            seed: 0,
        }
    }
}

impl GenConfig {
    /// The default surface statistics zoomed to a `size`-pixel grid:
    /// lengths, amplitudes and the value range scale with `size / 256`, so
    /// per-pixel gradients stay the same.
    pub fn for_size(size: usize) -> Self {
        let f = size as f64 / 256.0;
        let d = Self::default();
        Self {
            image_size: size,
            amplitude_range: d.amplitude_range.map(|a| a * f),
            sigma_range: d.sigma_range.map(|s| s * f),
            value_range_target: d.value_range_target.map(|v| v * f),
            ..d
        }
    }

    /// Smoother, lower-fringe-count surfaces on a 64×64 grid, used for the
    /// desk-scale training experiments.
    pub fn toy() -> Self {
        Self {
            image_size: 64,
            count: 600,
            n_gaussians_range: [2, 6],
            amplitude_range: [3.0, 10.0],
            sigma_range: [6.0, 22.0],
            slope_range: [-0.06, 0.06],
            value_range_target: [-11.0, 11.0],
            noise_menu: Vec::new(),
            seed: 0,
        }
    }

    pub fn with_noise(mut self, menu: &[f64]) -> Self {
        self.noise_menu = menu.to_vec();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.image_size < 16 {
            return bad(format!("image_size must be >= 16, got {}", self.image_size));
        }
        if self.count == 0 {
            return bad("count must be >= 1".into());
        }
        let [klo, khi] = self.n_gaussians_range;
        if klo > khi {
            return bad(format!("n_gaussians_range [{klo}, {khi}] is empty"));
        }
        for (name, [lo, hi]) in [
            ("amplitude_range", self.amplitude_range),
            ("sigma_range", self.sigma_range),
            ("slope_range", self.slope_range),
            ("value_range_target", self.value_range_target),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{name} [{lo}, {hi}] is empty or not finite"));
            }
        }
        if self.amplitude_range[0] < 0.0 {
            return bad("amplitude_range is a magnitude range and must be >= 0".into());
        }
        if self.sigma_range[0] <= 0.0 {
            return bad("sigma_range must be positive".into());
        }
        if self.noise_menu.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return bad("noise levels must be numbers (inf allowed for noise-free)".into());
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Draws one clean phase surface.
pub fn synth_phase(rng: &mut impl Rng, config: &GenConfig) -> Result<PhaseImage> {
    config.validate()?;
    let n = config.image_size;
    let [klo, khi] = config.n_gaussians_range;
    let k = rng.random_range(klo..=khi);
    let mut values = vec![0.0f64; n * n];
    for _ in 0..k {
        let amp = uniform(rng, config.amplitude_range) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let cy = rng.random_range(0.0..n as f64);
        let cx = rng.random_range(0.0..n as f64);
        let sy = uniform(rng, config.sigma_range);
        let sx = uniform(rng, config.sigma_range);
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let (s, c) = theta.sin_cos();
        let (ax, ay) = (0.5 / (sx * sx), 0.5 / (sy * sy));
        for (y, row) in values.chunks_mut(n).enumerate() {
            let dy = y as f64 - cy;
            for (x, v) in row.iter_mut().enumerate() {
                let dx = x as f64 - cx;
                let u = c * dx + s * dy;
                let w = -s * dx + c * dy;
                *v += amp * (-(ax * u * u + ay * w * w)).exp();
            }
        }
    }
    let a = uniform(rng, config.slope_range);
    let b = uniform(rng, config.slope_range);
    for (y, row) in values.chunks_mut(n).enumerate() {
        for (x, v) in row.iter_mut().enumerate() {
            *v += a * x as f64 + b * y as f64;
        }
    }
    rescale_into(&mut values, config.value_range_target);
    PhaseImage::new(n, n, values)
}

/// Squeezes values into `[lo, hi]` when they do not already fit: an affine
/// shrink if the span is too wide, otherwise a shift.
fn rescale_into(values: &mut [f64], [lo, hi]: [f64; 2]) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max - min > hi - lo {
        let s = (hi - lo) / (max - min);
        values.iter_mut().for_each(|v| *v = (lo + (*v - min) * s).clamp(lo, hi));
    } else if min < lo || max > hi {
        let shift = 0.5 * (lo + hi) - 0.5 * (min + max);
        values.iter_mut().for_each(|v| *v += shift);
    }
}

/// Independent generator for image `index`, identical whether images are
/// produced serially or in parallel.
pub fn image_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// One generated pair, already quantized to the stored precision.
#[derive(Debug, Clone)]
pub struct Sample {
    pub wrapped: Vec<f32>,
    pub truth: Vec<f32>,
    pub snr_db: Option<f64>,
}

/// Produces image `index` of the dataset described by `config`.
///
/// The clean phase is rounded to `f32` first and the wrapped observation is
/// derived from the rounded value, so a noise-free pair satisfies
/// `stored_wrapped == wrap(stored_truth)` bit for bit.
pub fn generate_sample(config: &GenConfig, index: usize) -> Result<Sample> {
    let mut rng = image_rng(config.seed, index);
    let clean = synth_phase(&mut rng, config)?;
    let snr_db = (!config.noise_menu.is_empty())
        .then(|| config.noise_menu[rng.random_range(0..config.noise_menu.len())]);
    let noise_seed: u64 = rng.random();
    let truth: Vec<f32> = clean.values().iter().map(|&v| v as f32).collect();
    let stored = PhaseImage::from_f32(config.image_size, config.image_size, &truth)?;
    let observed = match snr_db {
        Some(db) if db.is_finite() => add_noise(&stored, &NoiseSpec::new(db, noise_seed))?,
        _ => stored,
    };
    let wrapped = observed
        .values()
        .iter()
        .map(|&v| wrapped_to_f32(wrap_scalar(v)))
        .collect();
    Ok(Sample {
        wrapped,
        truth,
        snr_db,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    /// Byte offset of the image inside both data files.
    pub offset: u64,
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub config: GenConfig,
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub dtype: String,
    pub layout: String,
    pub records: Vec<ImageRecord>,
}

impl DatasetManifest {
    pub fn snr_list(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.snr_db).collect()
    }

    fn image_bytes(&self) -> u64 {
        (self.height * self.width * 4) as u64
    }
}

fn le_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Generates the dataset into `out_dir` (created if needed).
pub fn generate_dataset(config: &GenConfig, out_dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    let samples: Vec<Sample> = (0..config.count)
        .into_par_iter()
        .map(|i| generate_sample(config, i))
        .collect::<Result<_>>()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
    let n = config.image_size;
    let image_bytes = (n * n * 4) as u64;
    let records = samples
        .iter()
        .enumerate()
        .map(|(i, s)| ImageRecord {
            offset: i as u64 * image_bytes,
            snr_db: s.snr_db,
        })
        .collect();
    let manifest = DatasetManifest {
        version: DATASET_VERSION,
        config: config.clone(),
        count: config.count,
        height: n,
        width: n,
        dtype: "f32".into(),
        layout: "row-major".into(),
        records,
    };
    let wrapped: Vec<f32> = samples.iter().flat_map(|s| s.wrapped.iter().copied()).collect();
    let truth: Vec<f32> = samples.iter().flat_map(|s| s.truth.iter().copied()).collect();
    write_file(&out_dir.join(WRAPPED_FILE), &le_bytes(&wrapped))?;
    write_file(&out_dir.join(TRUTH_FILE), &le_bytes(&truth))?;
    let json = serde_json::to_string_pretty(&manifest)?;
    write_file(&out_dir.join(MANIFEST_FILE), json.as_bytes())?;
    Ok(manifest)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// A dataset held in memory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub path: PathBuf,
    wrapped: Vec<f32>,
    truth: Vec<f32>,
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::CorruptDataset {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn read_f32s(path: &Path, expected_bytes: u64) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| corrupt(path, format!("cannot read data file: {e}")))?;
    if bytes.len() as u64 != expected_bytes {
        return Err(corrupt(
            path,
            format!("expected {expected_bytes} bytes, found {}", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Reads a dataset written by [`generate_dataset`].
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| corrupt(&mpath, format!("cannot read manifest: {e}")))?;
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| corrupt(&mpath, format!("manifest is not JSON: {e}")))?;
    let found = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != DATASET_VERSION {
        return Err(Error::Version {
            found,
            expected: DATASET_VERSION,
        });
    }
    let manifest: DatasetManifest =
        serde_json::from_value(raw).map_err(|e| corrupt(&mpath, format!("bad manifest: {e}")))?;
    if manifest.records.len() != manifest.count || manifest.dtype != "f32" || manifest.height * manifest.width == 0 {
        return Err(corrupt(&mpath, "manifest fields are inconsistent"));
    }
    let expected = manifest.image_bytes() * manifest.count as u64;
    let wrapped = read_f32s(&dir.join(WRAPPED_FILE), expected)?;
    let truth = read_f32s(&dir.join(TRUTH_FILE), expected)?;
    let lim = std::f32::consts::PI;
    if let Some(i) = wrapped.iter().position(|v| !(*v > -lim && *v <= lim)) {
        return Err(corrupt(&dir.join(WRAPPED_FILE), format!("value {} at {i} is not wrapped", wrapped[i])));
    }
    if truth.iter().any(|v| !v.is_finite()) {
        return Err(corrupt(&dir.join(TRUTH_FILE), "non-finite value"));
    }
    Ok(Dataset {
        manifest,
        path: dir.to_path_buf(),
        wrapped,
        truth,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.manifest.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.manifest.height, self.manifest.width)
    }

    fn span(&self, i: usize) -> std::ops::Range<usize> {
        let px = self.manifest.height * self.manifest.width;
        i * px..(i + 1) * px
    }

    pub fn wrapped_f32(&self, i: usize) -> &[f32] {
        &self.wrapped[self.span(i)]
    }

    pub fn truth_f32(&self, i: usize) -> &[f32] {
        &self.truth[self.span(i)]
    }

    pub fn wrapped(&self, i: usize) -> Result<WrappedImage> {
        let (h, w) = self.dims();
        WrappedImage::from_f32(h, w, self.wrapped_f32(i))
    }

    pub fn truth(&self, i: usize) -> Result<PhaseImage> {
        let (h, w) = self.dims();
        PhaseImage::from_f32(h, w, self.truth_f32(i))
    }

    pub fn snr(&self, i: usize) -> Option<f64> {
        self.manifest.records[i].snr_db
    }

    /// All pairs in stored order.
    pub fn iter(&self) -> impl Iterator<Item = Result<(WrappedImage, PhaseImage, Option<f64>)>> + '_ {
        (0..self.len()).map(|i| Ok((self.wrapped(i)?, self.truth(i)?, self.snr(i))))
    }

    /// Stacks the listed images into `(input, target)` tensors of shape `(n, h, w, 1)`.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor4<f32>, Tensor4<f32>)> {
        let (h, w) = self.dims();
        let x: Vec<f32> = indices.iter().flat_map(|&i| self.wrapped_f32(i).iter().copied()).collect();
        let y: Vec<f32> = indices.iter().flat_map(|&i| self.truth_f32(i).iter().copied()).collect();
        Ok((
            Tensor4::from_vec(indices.len(), h, w, 1, x)?,
            Tensor4::from_vec(indices.len(), h, w, 1, y)?,
        ))
    }
}

/// Disjoint train/test index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..count` with `seed` and takes the last `test_count` indices
/// as the test set. Both halves are returned sorted.
pub fn split_indices(count: usize, test_count: usize, seed: u64) -> Result<Split> {
    if test_count == 0 || test_count >= count {
        return Err(Error::Config(format!(
            "test split of {test_count} leaves no training or test images out of {count}"
        )));
    }
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = idx.split_off(count - test_count);
    idx.sort_unstable();
    test.sort_unstable();
    Ok(Split { train: idx, test })
}
