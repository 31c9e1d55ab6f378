//! Spatial quad-directional LSTM block.
//!
//! A feature map is flattened into four scan sequences (left-to-right rows,
//! their full reversal, top-to-bottom columns, and their full reversal).
//! Each sequence is read by its own LSTM, the outputs are put back on the
//! grid, the two horizontal maps and the two vertical maps are concatenated
//! and fused by separate 3×3 convolutions (ReLU), and the two fused maps are
//! concatenated into a `2d`-channel output.
//!
//! Each direction is a single sequence of length `h·w`; the hidden state
//! carries across row (or column) boundaries.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::nn::{Conv2d, Layer, Lstm, Mode, Param, Relu, Scalar, Tensor4};

/// Scan order over a `h × w` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Rows top to bottom, each left to right.
    Right,
    /// Rows bottom to top, each right to left.
    Left,
    /// Columns left to right, each top to bottom.
    Down,
    /// Columns right to left, each bottom to top.
    Up,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Right, Direction::Left, Direction::Down, Direction::Up];

    pub fn name(self) -> &'static str {
        match self {
            Direction::Right => "right",
            Direction::Left => "left",
            Direction::Down => "down",
            Direction::Up => "up",
        }
    }

    /// Grid position `(row, col)` visited at step `s`.
    #[inline]
    pub fn position(self, s: usize, h: usize, w: usize) -> (usize, usize) {
        let last = h * w - 1;
        match self {
            Direction::Right => (s / w, s % w),
            Direction::Left => ((last - s) / w, (last - s) % w),
            Direction::Down => (s % h, s / h),
            Direction::Up => ((last - s) % h, (last - s) / h),
        }
    }
}

/// The four scan sequences of one feature map, each stored `[h·w, c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalSequences<T> {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub right: Vec<T>,
    pub left: Vec<T>,
    pub down: Vec<T>,
    pub up: Vec<T>,
}

impl<T: Scalar> DirectionalSequences<T> {
    pub fn get(&self, dir: Direction) -> &[T] {
        match dir {
            Direction::Right => &self.right,
            Direction::Left => &self.left,
            Direction::Down => &self.down,
            Direction::Up => &self.up,
        }
    }

    /// Feature vector at step `s` of a sequence.
    pub fn step(&self, dir: Direction, s: usize) -> &[T] {
        &self.get(dir)[s * self.c..(s + 1) * self.c]
    }

    pub fn len(&self) -> usize {
        self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Gathers batch-wide sequences `[n, h·w, c]` in scan order.
pub fn gather_sequences<T: Scalar>(x: &Tensor4<T>, dir: Direction) -> Vec<T> {
    let [n, h, w, c] = x.shape();
    let len = h * w;
    let mut out = Vec::with_capacity(n * len * c);
    for b in 0..n {
        for s in 0..len {
            let (r, col) = dir.position(s, h, w);
            let i = x.index(b, r, col, 0);
            out.extend_from_slice(&x.data()[i..i + c]);
        }
    }
    out
}

/// Inverse of [`gather_sequences`]: places `[n, h·w, c]` back on the grid.
pub fn scatter_sequences<T: Scalar>(
    seq: &[T],
    dir: Direction,
    n: usize,
    h: usize,
    w: usize,
    c: usize,
) -> Result<Tensor4<T>> {
    let len = h * w;
    if seq.len() != n * len * c {
        return shape_err(format!(
            "reassemble: expected {} values for {n}x{h}x{w}x{c}, got {}",
            n * len * c,
            seq.len()
        ));
    }
    let mut out = Tensor4::zeros(n, h, w, c);
    for b in 0..n {
        for s in 0..len {
            let (r, col) = dir.position(s, h, w);
            let d = out.index(b, r, col, 0);
            let src = (b * len + s) * c;
            out.data_mut()[d..d + c].copy_from_slice(&seq[src..src + c]);
        }
    }
    Ok(out)
}

/// The four scan sequences of batch element `b`.
pub fn extract_sequences<T: Scalar>(x: &Tensor4<T>, b: usize) -> Result<DirectionalSequences<T>> {
    let [n, h, w, c] = x.shape();
    if b >= n {
        return shape_err(format!("batch index {b} out of range for batch of {n}"));
    }
    let single = Tensor4::from_vec(1, h, w, c, x.image(b).to_vec())?;
    Ok(DirectionalSequences {
        h,
        w,
        c,
        right: gather_sequences(&single, Direction::Right),
        left: gather_sequences(&single, Direction::Left),
        down: gather_sequences(&single, Direction::Down),
        up: gather_sequences(&single, Direction::Up),
    })
}

/// Puts a single sequence of `u`-dimensional outputs back on an `h × w` grid.
pub fn reassemble<T: Scalar>(seq: &[Vec<T>], dir: Direction, h: usize, w: usize) -> Result<Tensor4<T>> {
    if seq.len() != h * w {
        return shape_err(format!("reassemble: sequence of {} for a {h}x{w} grid", seq.len()));
    }
    let u = seq.first().map_or(0, Vec::len);
    if u == 0 || seq.iter().any(|v| v.len() != u) {
        return shape_err("reassemble: inconsistent feature dimension");
    }
    let flat: Vec<T> = seq.iter().flatten().copied().collect();
    scatter_sequences(&flat, dir, 1, h, w, u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqdConfig {
    /// LSTM units per direction.
    pub units: usize,
    /// Filters in each fusion convolution; output has `2 * filters` channels.
    pub filters: usize,
}

impl Default for SqdConfig {
    fn default() -> Self {
        Self {
            units: 32,
            filters: 64,
        }
    }
}

/// Learnable state of the block: four independent LSTMs (right, left, down,
/// up) and the horizontal / vertical fusion convolutions.
#[derive(Debug, Clone)]
pub struct SqdLstm<T> {
    pub input_channels: usize,
    pub config: SqdConfig,
    pub lstms: [Lstm<T>; 4],
    pub fuse_h: Conv2d<T>,
    pub fuse_v: Conv2d<T>,
    relu_h: Relu,
    relu_v: Relu,
    input_shape: Option<[usize; 4]>,
}

impl<T: Scalar> SqdLstm<T> {
    pub fn zeros(name: &str, input_channels: usize, config: SqdConfig) -> Self {
        let SqdConfig { units, filters } = config;
        let lstm = |d: Direction| Lstm::zeros(&format!("{name}.lstm_{}", d.name()), input_channels, units);
        Self {
            input_channels,
            config,
            lstms: Direction::ALL.map(lstm),
            fuse_h: Conv2d::zeros(&format!("{name}.fuse_h"), 3, 2 * units, filters),
            fuse_v: Conv2d::zeros(&format!("{name}.fuse_v"), 3, 2 * units, filters),
            relu_h: Relu::new(),
            relu_v: Relu::new(),
            input_shape: None,
        }
    }

    pub fn init<R: Rng + ?Sized>(name: &str, input_channels: usize, config: SqdConfig, rng: &mut R) -> Self {
        let SqdConfig { units, filters } = config;
        let mut block = Self::zeros(name, input_channels, config);
        for (lstm, d) in block.lstms.iter_mut().zip(Direction::ALL) {
            *lstm = Lstm::init(&format!("{name}.lstm_{}", d.name()), input_channels, units, rng);
        }
        block.fuse_h = Conv2d::he(&format!("{name}.fuse_h"), 3, 2 * units, filters, rng);
        block.fuse_v = Conv2d::he(&format!("{name}.fuse_v"), 3, 2 * units, filters, rng);
        block
    }

    pub fn output_channels(&self) -> usize {
        2 * self.config.filters
    }

    pub fn lstm(&self, dir: Direction) -> &Lstm<T> {
        &self.lstms[dir as usize]
    }

    pub fn lstm_mut(&mut self, dir: Direction) -> &mut Lstm<T> {
        &mut self.lstms[dir as usize]
    }
}

impl<T: Scalar> Layer<T> for SqdLstm<T> {
    fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        let [n, h, w, c] = x.shape();
        if c != self.input_channels {
            return shape_err(format!(
                "sqd-lstm: expected {} input channels, got {c}",
                self.input_channels
            ));
        }
        let u = self.config.units;
        let mut maps = Vec::with_capacity(4);
        for (lstm, dir) in self.lstms.iter_mut().zip(Direction::ALL) {
            let seq = gather_sequences(x, dir);
            let y = lstm.forward_batch(&seq, n, h * w, mode)?;
            maps.push(scatter_sequences(&y, dir, n, h, w, u)?);
        }
        let horizontal = maps[0].concat_channels(&maps[1])?;
        let vertical = maps[2].concat_channels(&maps[3])?;
        let oh = self.fuse_h.forward(&horizontal, mode)?;
        let oh = self.relu_h.forward(&oh, mode)?;
        let ov = self.fuse_v.forward(&vertical, mode)?;
        let ov = self.relu_v.forward(&ov, mode)?;
        self.input_shape = Some(x.shape());
        oh.concat_channels(&ov)
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let Some([n, h, w, c]) = self.input_shape else {
            return crate::nn::missing_cache("sqd-lstm");
        };
        let u = self.config.units;
        let (doh, dov) = dy.split_channels(self.config.filters)?;
        let dh = self.relu_h.backward(&doh)?;
        let dh = self.fuse_h.backward(&dh)?;
        let dv = self.relu_v.backward(&dov)?;
        let dv = self.fuse_v.backward(&dv)?;
        let (d_right, d_left) = dh.split_channels(u)?;
        let (d_down, d_up) = dv.split_channels(u)?;
        let mut dx = Tensor4::zeros(n, h, w, c);
        for ((lstm, dir), dmap) in self
            .lstms
            .iter_mut()
            .zip(Direction::ALL)
            .zip([d_right, d_left, d_down, d_up])
        {
            let dseq = gather_sequences(&dmap, dir);
            let dxs = lstm.backward_batch(&dseq)?;
            dx.add_assign(&scatter_sequences(&dxs, dir, n, h, w, c)?)?;
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        let mut out: Vec<&Param<T>> = self.lstms.iter().flat_map(Lstm::params).collect();
        out.extend(self.fuse_h.params());
        out.extend(self.fuse_v.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out: Vec<&mut Param<T>> = self.lstms.iter_mut().flat_map(Lstm::params_mut).collect();
        out.extend(self.fuse_h.params_mut());
        out.extend(self.fuse_v.params_mut());
        out
    }
}
