//! Encoder / SQD-LSTM / decoder regression network.
//!
//! ```text
//! input (n,H,W,1)
//!   encoder stage k:  conv3x3 → BN → ReLU ──skip_k──┐ → maxpool 2x2
//!   bottleneck:       SQD-LSTM (or identity for the U-Net ablation)
//!   decoder stage k:  tconv3x3/2 → concat(·, skip) → conv3x3 → BN → ReLU
//!   head:             conv1x1, linear → (n,H,W,1)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::checkpoint::{read_checkpoint, write_checkpoint};
use crate::nn::{
    BatchNorm, Conv2d, ConvTranspose3x3S2, Layer, MaxPool2, Mode, Param, Relu, Scalar, Tensor4,
};
use crate::sqd::{SqdConfig, SqdLstm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub encoder_filters: Vec<usize>,
    pub decoder_filters: Vec<usize>,
    pub sqd_units: usize,
    pub sqd_filters: usize,
    /// `false` builds the plain U-Net ablation (identity at the bottleneck).
    pub use_sqd: bool,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Default for ArchConfig {
    /// Four stages (32, 64, 128, 256), bottleneck 16×16 for 256×256 input,
    /// SQD-LSTM with 32 units and 64 fusion filters.
    fn default() -> Self {
        Self {
            encoder_filters: vec![32, 64, 128, 256],
            decoder_filters: vec![256, 128, 64, 32],
            sqd_units: 32,
            sqd_filters: 64,
            use_sqd: true,
            in_channels: 1,
            out_channels: 1,
        }
    }
}

impl ArchConfig {
    /// Reduced three-stage network (16, 32, 64) for desk-scale experiments.
    pub fn toy() -> Self {
        Self {
            encoder_filters: vec![16, 32, 64],
            decoder_filters: vec![64, 32, 16],
            ..Self::default()
        }
    }

    /// Mirrored decoder for the given encoder filter schedule.
    pub fn with_encoder(encoder_filters: Vec<usize>) -> Self {
        let decoder_filters = encoder_filters.iter().rev().copied().collect();
        Self {
            encoder_filters,
            decoder_filters,
            ..Self::default()
        }
    }

    pub fn stages(&self) -> usize {
        self.encoder_filters.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_filters.is_empty() || self.encoder_filters.len() != self.decoder_filters.len() {
            return Err(Error::Config(format!(
                "encoder ({}) and decoder ({}) stage counts must be equal and non-zero",
                self.encoder_filters.len(),
                self.decoder_filters.len()
            )));
        }
        let all = self
            .encoder_filters
            .iter()
            .chain(&self.decoder_filters)
            .chain([&self.in_channels, &self.out_channels]);
        if all.into_iter().any(|&f| f == 0) || (self.use_sqd && (self.sqd_units == 0 || self.sqd_filters == 0)) {
            return Err(Error::Config("filter and unit counts must be positive".into()));
        }
        Ok(())
    }

    /// Input sides must halve cleanly at every stage.
    pub fn check_input_dims(&self, h: usize, w: usize) -> Result<()> {
        let f = 1usize << self.stages();
        if h == 0 || w == 0 || !h.is_multiple_of(f) || !w.is_multiple_of(f) {
            return Err(Error::Config(format!(
                "input {h}x{w} is not divisible by 2^{} = {f}",
                self.stages()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct ConvBlock<T> {
    conv: Conv2d<T>,
    bn: BatchNorm<T>,
    relu: Relu,
}

impl<T: Scalar> ConvBlock<T> {
    fn new(name: &str, cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv: Conv2d::he(&format!("{name}.conv"), 3, cin, cout, rng),
            bn: BatchNorm::new(&format!("{name}.bn"), cout),
            relu: Relu::new(),
        }
    }

    fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        let y = self.conv.forward(x, mode)?;
        let y = self.bn.forward(&y, mode)?;
        self.relu.forward(&y, mode)
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let d = self.relu.backward(dy)?;
        let d = self.bn.backward(&d)?;
        self.conv.backward(&d)
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.conv.params();
        v.extend(self.bn.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.conv.params_mut();
        v.extend(self.bn.params_mut());
        v
    }
}

#[derive(Debug, Clone)]
struct DecoderStage<T> {
    up: ConvTranspose3x3S2<T>,
    block: ConvBlock<T>,
}

/// The full set of learnable layers plus the architecture they realize.
#[derive(Debug, Clone)]
pub struct Network<T> {
    config: ArchConfig,
    encoder: Vec<(ConvBlock<T>, MaxPool2)>,
    sqd: Option<SqdLstm<T>>,
    decoder: Vec<DecoderStage<T>>,
    head: Conv2d<T>,
}

impl<T: Scalar> Network<T> {
    /// Builds the network with freshly initialized weights drawn from `seed`.
    pub fn build(config: &ArchConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut encoder = Vec::new();
        let mut cin = config.in_channels;
        for (k, &f) in config.encoder_filters.iter().enumerate() {
            encoder.push((ConvBlock::new(&format!("enc{k}"), cin, f, &mut rng), MaxPool2::new()));
            cin = f;
        }
        let sqd = if config.use_sqd {
            let sc = SqdConfig {
                units: config.sqd_units,
                filters: config.sqd_filters,
            };
            let block = SqdLstm::init("sqd", cin, sc, &mut rng);
            cin = block.output_channels();
            Some(block)
        } else {
            None
        };
        let mut decoder = Vec::new();
        let stages = config.stages();
        for (k, &f) in config.decoder_filters.iter().enumerate() {
            let skip = config.encoder_filters[stages - 1 - k];
            decoder.push(DecoderStage {
                up: ConvTranspose3x3S2::he(&format!("dec{k}.up"), cin, f, &mut rng),
                block: ConvBlock::new(&format!("dec{k}"), f + skip, f, &mut rng),
            });
            cin = f;
        }
        let head = Conv2d::he("head", 1, cin, config.out_channels, &mut rng);
        Ok(Self {
            config: config.clone(),
            encoder,
            sqd,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    pub fn sqd(&self) -> Option<&SqdLstm<T>> {
        self.sqd.as_ref()
    }

    pub fn sqd_mut(&mut self) -> Option<&mut SqdLstm<T>> {
        self.sqd.as_mut()
    }

    pub fn head_mut(&mut self) -> &mut Conv2d<T> {
        &mut self.head
    }

    pub fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        if x.c() != self.config.in_channels {
            return shape_err(format!(
                "network expects {} input channels, got {}",
                self.config.in_channels,
                x.c()
            ));
        }
        self.config.check_input_dims(x.h(), x.w())?;
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut cur = x.clone();
        for (block, pool) in &mut self.encoder {
            let act = block.forward(&cur, mode)?;
            cur = pool.forward(&act, mode)?;
            skips.push(act);
        }
        if let Some(sqd) = self.sqd.as_mut() {
            cur = sqd.forward(&cur, mode)?;
        }
        for stage in &mut self.decoder {
            let up = stage.up.forward(&cur, mode)?;
            let skip = skips.pop().expect("one skip per stage");
            cur = stage.block.forward(&up.concat_channels(&skip)?, mode)?;
        }
        self.head.forward(&cur, mode)
    }

    /// Backpropagates `dy` (gradient of the loss w.r.t. the output) through
    /// the last training-mode forward pass; returns the input gradient.
    pub fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut d = self.head.backward(dy)?;
        let mut skip_grads = Vec::with_capacity(self.decoder.len());
        for stage in self.decoder.iter_mut().rev() {
            let dcat = stage.block.backward(&d)?;
            let (dup, dskip) = dcat.split_channels(stage.up.cout)?;
            skip_grads.push(dskip);
            d = stage.up.backward(&dup)?;
        }
        if let Some(sqd) = self.sqd.as_mut() {
            d = sqd.backward(&d)?;
        }
        for (block, pool) in self.encoder.iter_mut().rev() {
            let mut dact = pool.backward(&d)?;
            dact.add_assign(&skip_grads.pop().expect("one skip gradient per stage"))?;
            d = block.backward(&dact)?;
        }
        Ok(d)
    }

    /// Every parameter (trainable and running statistics) in a fixed order.
    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v = Vec::new();
        for (block, _) in &self.encoder {
            v.extend(block.params());
        }
        if let Some(sqd) = &self.sqd {
            v.extend(sqd.params());
        }
        for stage in &self.decoder {
            v.extend(stage.up.params());
            v.extend(stage.block.params());
        }
        v.extend(self.head.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = Vec::new();
        for (block, _) in &mut self.encoder {
            v.extend(block.params_mut());
        }
        if let Some(sqd) = &mut self.sqd {
            v.extend(sqd.params_mut());
        }
        for stage in &mut self.decoder {
            v.extend(stage.up.params_mut());
            v.extend(stage.block.params_mut());
        }
        v.extend(self.head.params_mut());
        v
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.params().iter().filter(|p| p.trainable).map(|p| p.len()).sum()
    }

    /// Copies values from another network of the same architecture.
    pub fn load_values_from<U: Scalar>(&mut self, other: &Network<U>) -> Result<()> {
        if self.config != other.config {
            return Err(Error::Config("architecture mismatch".into()));
        }
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            dst.value = src.value.iter().map(|v| T::cast(v.f64())).collect();
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        self.write_to(BufWriter::new(file))
    }

    pub fn write_to<W: std::io::Write>(&self, out: W) -> Result<()> {
        let arch = serde_json::to_value(&self.config)?;
        write_checkpoint(out, arch, &self.params())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Self::read_from(BufReader::new(file))
    }

    pub fn read_from<R: std::io::BufRead>(input: R) -> Result<Self> {
        let (header, tensors) = read_checkpoint(input)?;
        let config: ArchConfig = serde_json::from_value(header.arch.clone())
            .map_err(|e| Error::Checkpoint(format!("bad architecture record: {e}")))?;
        let mut net = Self::build(&config, 0)?;
        let params = net.params_mut();
        if params.len() != header.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, architecture needs {}",
                header.tensors.len(),
                params.len()
            )));
        }
        for ((p, entry), values) in params.into_iter().zip(&header.tensors).zip(tensors) {
            if p.name != entry.name || p.shape != entry.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match expected {} {:?}",
                    entry.name, entry.shape, p.name, p.shape
                )));
            }
            p.value = values.into_iter().map(|v| T::cast(v as f64)).collect();
        }
        Ok(net)
    }
}
