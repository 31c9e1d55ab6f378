//! ReLU and 2×2 max pooling.

use super::{missing_cache, Layer, Mode, Param, Scalar, Tensor4};
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for Relu {
    fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        if mode == Mode::Train {
            self.mask = Some(x.data().iter().map(|&v| v > T::zero()).collect());
        }
        Ok(x.map(|v| if v > T::zero() { v } else { T::zero() }))
    }

    /// Subgradient 0 at the kink.
    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let Some(mask) = self.mask.as_ref() else {
            return missing_cache("relu");
        };
        if mask.len() != dy.data().len() {
            return shape_err("relu backward: size mismatch");
        }
        let mut dx = dy.clone();
        dx.data_mut()
            .iter_mut()
            .zip(mask)
            .for_each(|(d, &m)| {
                if !m {
                    *d = T::zero()
                }
            });
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }
}

/// 2×2 max pooling, stride 2. Ties resolve to the first element in
/// row-major window order.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2 {
    cache: Option<([usize; 4], Vec<usize>)>,
}

impl MaxPool2 {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Scalar> Layer<T> for MaxPool2 {
    fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        let [n, h, w, c] = x.shape();
        if h % 2 != 0 || w % 2 != 0 {
            return shape_err(format!("max pool needs even dims, got {h}x{w}"));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor4::zeros(n, oh, ow, c);
        let mut argmax = vec![0usize; n * oh * ow * c];
        let src = x.data();
        for b in 0..n {
            for i in 0..oh {
                for j in 0..ow {
                    for ch in 0..c {
                        let mut best = x.index(b, 2 * i, 2 * j, ch);
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let idx = x.index(b, 2 * i + dy, 2 * j + dx, ch);
                            if src[idx] > src[best] {
                                best = idx;
                            }
                        }
                        let o = out.index(b, i, j, ch);
                        out.data_mut()[o] = src[best];
                        argmax[o] = best;
                    }
                }
            }
        }
        if mode == Mode::Train {
            self.cache = Some((x.shape(), argmax));
        }
        Ok(out)
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let Some((shape, argmax)) = self.cache.as_ref() else {
            return missing_cache("max pool");
        };
        if argmax.len() != dy.data().len() {
            return shape_err("max pool backward: size mismatch");
        }
        let [n, h, w, c] = *shape;
        let mut dx = Tensor4::zeros(n, h, w, c);
        let d = dx.data_mut();
        for (&src, &g) in argmax.iter().zip(dy.data()) {
            d[src] = d[src] + g;
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Vec::new()
    }
}

/// Nearest-neighbour 2× upsampling (each pixel duplicated into a 2×2 block).
pub fn upsample2_nearest<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    let [n, h, w, c] = x.shape();
    Tensor4::from_fn(n, 2 * h, 2 * w, c, |b, y, xx, ch| x.at(b, y / 2, xx / 2, ch))
}
