//! Training loop and evaluation.
//!
//! Training is a plain Adam loop over seeded per-epoch shuffles of the
//! training split. After every epoch the model is scored on the test split
//! and the best-scoring weights are kept. All scores are NRMSE after
//! removing the best global offset, because the composite loss cannot see
//! offsets and every method should be judged on the same footing.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{load_dataset, split_indices, Dataset, Split};
use crate::error::{Error, Result};
use crate::losses::{loss_and_grad, LossKind, LossWeights, Pooling};
use crate::network::{ArchConfig, Network};
use crate::nn::{Adam, AdamConfig, Mode, Tensor4};
use crate::phase::{congruence_fraction, nrmse_offset_corrected, PhaseImage, DEFAULT_CONGRUENCE_TOL};
use crate::qgpu::qgpu_unwrap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dataset: PathBuf,
    pub arch: ArchConfig,
    pub weights: LossWeights,
    pub pooling: Pooling,
    pub loss: LossKind,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Number of images held out for testing.
    pub test_count: usize,
}

impl TrainConfig {
    pub fn new(dataset: impl Into<PathBuf>) -> Self {
        Self {
            dataset: dataset.into(),
            arch: ArchConfig::default(),
            weights: LossWeights::default(),
            pooling: Pooling::Joint,
            loss: LossKind::Lc,
            lr: 1e-3,
            batch_size: 8,
            epochs: 10,
            seed: 0,
            test_count: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be >= 1".into()));
        }
        // lr = 0 is accepted as a frozen run.
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        self.weights.validate()?;
        self.arch.validate()
    }
}

/// Deterministic per-epoch numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_var: f64,
    pub train_tv: f64,
    pub test_nrmse_pct: f64,
}

/// Which images took part in gradient steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAudit {
    pub train_images_used: usize,
    pub test_images_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub loss: String,
    pub use_sqd: bool,
    pub seed: u64,
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub split: Split,
    pub audit: SplitAudit,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.records[self.best_epoch - 1]
    }
}

pub struct TrainOutcome {
    /// Weights from the epoch with the lowest test NRMSE.
    pub model: Network<f32>,
    pub history: TrainHistory,
    /// Wall seconds per epoch, kept apart from the reproducible history.
    pub epoch_seconds: Vec<f64>,
}

/// Loads the dataset named in `config` and trains on it.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    let ds = load_dataset(&config.dataset)?;
    train_on(&ds, config, |_| {})
}

/// Trains on an already loaded dataset; `progress` sees every finished epoch.
pub fn train_on(ds: &Dataset, config: &TrainConfig, mut progress: impl FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    config.validate()?;
    let (h, w) = ds.dims();
    config.arch.check_input_dims(h, w)?;
    let split = split_indices(ds.len(), config.test_count, config.seed)?;
    let mut net = Network::<f32>::build(&config.arch, config.seed)?;
    let mut adam = Adam::new(AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    });
    let mut used = vec![false; ds.len()];
    let mut order = split.train.clone();
    let mut records = Vec::with_capacity(config.epochs);
    let mut epoch_seconds = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Network<f32>)> = None;
    let mut best_epoch = 0;

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mut shuffle = ChaCha8Rng::seed_from_u64(config.seed);
        shuffle.set_stream(epoch as u64);
        order.shuffle(&mut shuffle);
        let (mut sum, mut sum_var, mut sum_tv, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            chunk.iter().for_each(|&i| used[i] = true);
            let (x, y) = ds.batch(chunk)?;
            net.zero_grad();
            let pred = net.forward(&x, Mode::Train)?;
            let (value, grad) = loss_and_grad(config.loss, &pred, &y, &config.weights, config.pooling)?;
            if !value.total.is_finite() || !grad.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    total: value.total,
                    var: value.var,
                    tv: value.tv,
                });
            }
            net.backward(&grad)?;
            adam.step(&mut net.params_mut())?;
            sum += value.total;
            sum_var += value.var;
            sum_tv += value.tv;
            batches += 1;
        }
        let test = evaluate_model(&mut net, ds, &split.test)?;
        let n = batches as f64;
        let record = EpochRecord {
            epoch,
            train_loss: sum / n,
            train_var: sum_var / n,
            train_tv: sum_tv / n,
            test_nrmse_pct: test.mean_nrmse_pct,
        };
        progress(&record);
        if best.as_ref().is_none_or(|(score, _)| record.test_nrmse_pct < *score) {
            best = Some((record.test_nrmse_pct, net.clone()));
            best_epoch = epoch;
        }
        records.push(record);
        epoch_seconds.push(start.elapsed().as_secs_f64());
    }

    let audit = SplitAudit {
        train_images_used: split.train.iter().filter(|&&i| used[i]).count(),
        test_images_used: split.test.iter().filter(|&&i| used[i]).count(),
    };
    if audit.test_images_used != 0 {
        return Err(Error::Config(format!(
            "split violation: {} test images reached a gradient step",
            audit.test_images_used
        )));
    }
    let model = best.expect("at least one epoch").1;
    Ok(TrainOutcome {
        model,
        history: TrainHistory {
            loss: config.loss.name().into(),
            use_sqd: config.arch.use_sqd,
            seed: config.seed,
            records,
            best_epoch,
            split,
            audit,
        },
        epoch_seconds,
    })
}

/// How predictions are produced for an evaluation.
pub enum Method<'a> {
    Model(&'a mut Network<f32>),
    Qgpu,
    /// The wrapped input itself, a floor every method should beat.
    Identity,
    /// The ground truth itself; scores zero.
    Oracle,
}

impl Method<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Model(_) => "model",
            Method::Qgpu => "qgpu",
            Method::Identity => "identity",
            Method::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetric {
    pub index: usize,
    pub snr_db: Option<f64>,
    pub nrmse_pct: f64,
    pub congruence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrBucket {
    /// `None` for noise-free images.
    pub snr_db: Option<f64>,
    pub n_images: usize,
    pub mean_nrmse_pct: f64,
    pub median_nrmse_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub n_images: usize,
    pub mean_nrmse_pct: f64,
    pub median_nrmse_pct: f64,
    pub mean_congruence: f64,
    pub buckets: Vec<SnrBucket>,
    pub per_image: Vec<ImageMetric>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn summarize(method: &str, per_image: Vec<ImageMetric>) -> MetricsReport {
    let scores: Vec<f64> = per_image.iter().map(|m| m.nrmse_pct).collect();
    let n = per_image.len();
    // BTreeMap over the bit pattern keeps bucket order stable; None sorts first.
    let mut groups: BTreeMap<Option<u64>, Vec<f64>> = BTreeMap::new();
    for m in &per_image {
        groups
            .entry(m.snr_db.map(|s| s.to_bits()))
            .or_default()
            .push(m.nrmse_pct);
    }
    let mut buckets: Vec<SnrBucket> = groups
        .into_iter()
        .map(|(k, v)| SnrBucket {
            snr_db: k.map(f64::from_bits),
            n_images: v.len(),
            mean_nrmse_pct: v.iter().sum::<f64>() / v.len() as f64,
            median_nrmse_pct: median(&v),
        })
        .collect();
    buckets.sort_by(|a, b| match (a.snr_db, b.snr_db) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (a, b) => a.is_some().cmp(&b.is_some()),
    });
    MetricsReport {
        method: method.into(),
        n_images: n,
        mean_nrmse_pct: scores.iter().sum::<f64>() / n as f64,
        median_nrmse_pct: median(&scores),
        mean_congruence: per_image.iter().map(|m| m.congruence).sum::<f64>() / n as f64,
        buckets,
        per_image,
    }
}

fn score(ds: &Dataset, i: usize, pred: &PhaseImage) -> Result<ImageMetric> {
    let truth = ds.truth(i)?;
    Ok(ImageMetric {
        index: i,
        snr_db: ds.snr(i),
        nrmse_pct: nrmse_offset_corrected(pred, &truth)?,
        congruence: congruence_fraction(pred, &ds.wrapped(i)?, DEFAULT_CONGRUENCE_TOL)?,
    })
}

/// Batch size used for inference.
const EVAL_BATCH: usize = 8;

fn evaluate_model(net: &mut Network<f32>, ds: &Dataset, indices: &[usize]) -> Result<MetricsReport> {
    evaluate(Method::Model(net), ds, indices)
}

/// Scores `method` on the listed images of `ds`.
pub fn evaluate(method: Method<'_>, ds: &Dataset, indices: &[usize]) -> Result<MetricsReport> {
    evaluate_timed(method, ds, indices).map(|(r, _)| r)
}

/// Like [`evaluate`], also returning the mean wall seconds per image.
pub fn evaluate_timed(method: Method<'_>, ds: &Dataset, indices: &[usize]) -> Result<(MetricsReport, f64)> {
    if indices.is_empty() {
        return Err(Error::InvalidInput("nothing to evaluate".into()));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= ds.len()) {
        return Err(Error::InvalidInput(format!("image index {bad} out of range")));
    }
    let name = method.name();
    let (h, w) = ds.dims();
    let start = Instant::now();
    let per_image = match method {
        Method::Model(net) => {
            net.config().check_input_dims(h, w)?;
            let mut out = Vec::with_capacity(indices.len());
            let mut preds = Vec::with_capacity(indices.len());
            for chunk in indices.chunks(EVAL_BATCH) {
                let (x, _) = ds.batch(chunk)?;
                let y = net.forward(&x, Mode::Infer)?;
                for b in 0..chunk.len() {
                    preds.push(PhaseImage::from_f32(h, w, y.image(b))?);
                }
            }
            for (&i, p) in indices.iter().zip(&preds) {
                out.push(score(ds, i, p)?);
            }
            out
        }
        Method::Qgpu => indices
            .par_iter()
            .map(|&i| score(ds, i, &qgpu_unwrap(&ds.wrapped(i)?)?))
            .collect::<Result<_>>()?,
        Method::Identity => indices
            .iter()
            .map(|&i| score(ds, i, &ds.wrapped(i)?.as_phase()))
            .collect::<Result<_>>()?,
        Method::Oracle => indices
            .iter()
            .map(|&i| score(ds, i, &ds.truth(i)?))
            .collect::<Result<_>>()?,
    };
    let seconds = start.elapsed().as_secs_f64() / indices.len() as f64;
    Ok((summarize(name, per_image), seconds))
}

/// Runs the network on one wrapped image.
pub fn predict(net: &mut Network<f32>, wrapped: &crate::WrappedImage) -> Result<PhaseImage> {
    let (h, w) = wrapped.dims();
    let x = Tensor4::from_vec(1, h, w, 1, wrapped.to_f32())?;
    let y = net.forward(&x, Mode::Infer)?;
    PhaseImage::from_f32(h, w, y.data())
}
