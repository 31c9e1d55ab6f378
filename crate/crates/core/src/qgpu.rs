//! Quality-guided path-following unwrapper.
//!
//! Quality is the negated phase-derivative variance: for every pixel, the
//! variances of the wrapped horizontal and vertical differences inside its
//! 3×3 neighbourhood are summed and negated. Unwrapping starts from the best
//! pixel and grows through a max-priority frontier, so unreliable regions are
//! integrated last.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::phase::{wrap_scalar, PhaseImage, WrappedImage};

/// Per-pixel reliability, higher is better. Row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl QualityMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

fn check_dims(w: &WrappedImage) -> Result<(usize, usize)> {
    let (h, wd) = w.dims();
    if h < 2 || wd < 2 {
        return Err(Error::InvalidInput(format!("need at least 2x2 pixels, got {h}x{wd}")));
    }
    Ok((h, wd))
}

/// Variance of the values of `field` (an `fh × fw` grid) that fall inside the
/// 3×3 window centred on `(r, c)`.
fn window_variance(field: &[f64], fh: usize, fw: usize, r: usize, c: usize) -> f64 {
    let (mut n, mut s, mut s2) = (0.0, 0.0, 0.0);
    for y in r.saturating_sub(1)..(r + 2).min(fh) {
        for x in c.saturating_sub(1)..(c + 2).min(fw) {
            let v = field[y * fw + x];
            n += 1.0;
            s += v;
            s2 += v * v;
        }
    }
    if n == 0.0 {
        return 0.0;
    }
    let m = s / n;
    (s2 / n - m * m).max(0.0)
}

pub fn quality_map(w: &WrappedImage) -> Result<QualityMap> {
    let (h, wd) = check_dims(w)?;
    let v = w.values();
    let mut dx = vec![0.0; h * (wd - 1)];
    for r in 0..h {
        for c in 0..wd - 1 {
            dx[r * (wd - 1) + c] = wrap_scalar(v[r * wd + c + 1] - v[r * wd + c]);
        }
    }
    let mut dy = vec![0.0; (h - 1) * wd];
    for r in 0..h - 1 {
        for c in 0..wd {
            dy[r * wd + c] = wrap_scalar(v[(r + 1) * wd + c] - v[r * wd + c]);
        }
    }
    let mut values = Vec::with_capacity(h * wd);
    for r in 0..h {
        for c in 0..wd {
            let vx = window_variance(&dx, h, wd - 1, r, c.min(wd - 2));
            let vy = window_variance(&dy, h - 1, wd, r.min(h - 2), c);
            values.push(-(vx + vy));
        }
    }
    Ok(QualityMap {
        height: h,
        width: wd,
        values,
    })
}

/// Frontier entry: best quality first, then the smallest pixel index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    quality: f64,
    index: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.quality
            .total_cmp(&other.quality)
            .then_with(|| Reverse(self.index).cmp(&Reverse(other.index)))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Unwraps `w` along a quality-ordered path. The output is congruent with
/// `w` by construction and is anchored so that the seed pixel keeps its
/// wrapped value.
pub fn qgpu_unwrap(w: &WrappedImage) -> Result<PhaseImage> {
    let q = quality_map(w)?;
    qgpu_unwrap_with(w, &q)
}

pub fn qgpu_unwrap_with(w: &WrappedImage, q: &QualityMap) -> Result<PhaseImage> {
    let (h, wd) = check_dims(w)?;
    if (q.height, q.width) != (h, wd) {
        return Err(Error::Shape("quality map does not match image".into()));
    }
    let v = w.values();
    let seed = q
        .values
        .iter()
        .enumerate()
        .map(|(index, &quality)| Entry { quality, index })
        .max()
        .expect("non-empty image")
        .index;
    let mut out = vec![0.0; h * wd];
    let mut done = vec![false; h * wd];
    out[seed] = v[seed];
    done[seed] = true;
    let mut heap = BinaryHeap::new();
    heap.push(Entry {
        quality: q.values[seed],
        index: seed,
    });
    let mut assigned = 1;
    while let Some(Entry { index, .. }) = heap.pop() {
        let (r, c) = (index / wd, index % wd);
        let neighbours = [
            (r > 0).then(|| index - wd),
            (c > 0).then(|| index - 1),
            (c + 1 < wd).then(|| index + 1),
            (r + 1 < h).then(|| index + wd),
        ];
        for n in neighbours.into_iter().flatten() {
            if done[n] {
                continue;
            }
            out[n] = out[index] + wrap_scalar(v[n] - v[index]);
            done[n] = true;
            assigned += 1;
            heap.push(Entry {
                quality: q.values[n],
                index: n,
            });
        }
    }
    debug_assert_eq!(assigned, h * wd);
    PhaseImage::new(h, wd, out)
}
