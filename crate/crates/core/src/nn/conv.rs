//! Stride-1 "same" convolution (zero padding) via im2col + GEMM.

use rand::Rng;

use super::{init, matmul, missing_cache, Layer, Mode, Param, Scalar, Tensor4};
use crate::error::{shape_err, Result};

/// `k×k` convolution, `k` odd, stride 1, zero "same" padding.
///
/// Weights are stored `[k, k, cin, cout]`, i.e. a `(k·k·cin) × cout` matrix.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub ksize: usize,
    pub cin: usize,
    pub cout: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor4<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeros(name: &str, ksize: usize, cin: usize, cout: usize) -> Self {
        assert!(ksize % 2 == 1, "odd kernel sizes only");
        Self {
            ksize,
            cin,
            cout,
            weight: Param::zeros(format!("{name}.weight"), vec![ksize, ksize, cin, cout]),
            bias: Param::zeros(format!("{name}.bias"), vec![cout]),
            input: None,
        }
    }

    /// He-normal weights, zero bias.
    pub fn he<R: Rng + ?Sized>(name: &str, ksize: usize, cin: usize, cout: usize, rng: &mut R) -> Self {
        let mut conv = Self::zeros(name, ksize, cin, cout);
        conv.weight.value = init::he_normal(rng, ksize * ksize * cin, conv.weight.len());
        conv
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        if x.c() != self.cin {
            return shape_err(format!(
                "{}: expected {} input channels, got {}",
                self.weight.name,
                self.cin,
                x.c()
            ));
        }
        Ok(())
    }
}

/// Patch matrix with one row per output pixel and columns ordered `(ky, kx, c)`.
pub(crate) fn im2col<T: Scalar>(x: &Tensor4<T>, k: usize) -> Vec<T> {
    let [n, h, w, c] = x.shape();
    let pad = (k / 2) as isize;
    let row_len = k * k * c;
    let mut cols = vec![T::zero(); n * h * w * row_len];
    let src = x.data();
    for b in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let row = ((b * h + y) * w + xx) * row_len;
                for ky in 0..k {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let sx = xx as isize + kx as isize - pad;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let s = ((b * h + sy as usize) * w + sx as usize) * c;
                        let d = row + (ky * k + kx) * c;
                        cols[d..d + c].copy_from_slice(&src[s..s + c]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input grid.
pub(crate) fn col2im<T: Scalar>(cols: &[T], shape: [usize; 4], k: usize) -> Tensor4<T> {
    let [n, h, w, c] = shape;
    let pad = (k / 2) as isize;
    let row_len = k * k * c;
    let mut out = Tensor4::zeros(n, h, w, c);
    let dst = out.data_mut();
    for b in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let row = ((b * h + y) * w + xx) * row_len;
                for ky in 0..k {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let sx = xx as isize + kx as isize - pad;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let s = ((b * h + sy as usize) * w + sx as usize) * c;
                        let d = row + (ky * k + kx) * c;
                        for ch in 0..c {
                            dst[s + ch] = dst[s + ch] + cols[d + ch];
                        }
                    }
                }
            }
        }
    }
    out
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        self.check_input(x)?;
        let [n, h, w, _] = x.shape();
        let rows = n * h * w;
        let kk = self.ksize * self.ksize * self.cin;
        let mut out = vec![T::zero(); rows * self.cout];
        if self.ksize == 1 {
            matmul(rows, kk, self.cout, x.data(), false, &self.weight.value, false, &mut out, false);
        } else {
            let cols = im2col(x, self.ksize);
            matmul(rows, kk, self.cout, &cols, false, &self.weight.value, false, &mut out, false);
        }
        for px in out.chunks_mut(self.cout) {
            px.iter_mut()
                .zip(&self.bias.value)
                .for_each(|(o, &b)| *o = *o + b);
        }
        self.input = (mode == Mode::Train).then(|| x.clone());
        Tensor4::from_vec(n, h, w, self.cout, out)
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let Some(x) = self.input.as_ref() else {
            return missing_cache("conv2d");
        };
        let [n, h, w, _] = x.shape();
        if dy.shape() != [n, h, w, self.cout] {
            return shape_err(format!("conv2d backward: upstream {:?}", dy.shape()));
        }
        let rows = n * h * w;
        let kk = self.ksize * self.ksize * self.cin;
        for px in dy.data().chunks(self.cout) {
            self.bias
                .grad
                .iter_mut()
                .zip(px)
                .for_each(|(g, &d)| *g = *g + d);
        }
        let mut dcols = vec![T::zero(); rows * kk];
        matmul(rows, self.cout, kk, dy.data(), false, &self.weight.value, true, &mut dcols, false);
        if self.ksize == 1 {
            matmul(kk, rows, self.cout, x.data(), true, dy.data(), false, &mut self.weight.grad, true);
            Tensor4::from_vec(n, h, w, self.cin, dcols)
        } else {
            let cols = im2col(x, self.ksize);
            matmul(kk, rows, self.cout, &cols, true, dy.data(), false, &mut self.weight.grad, true);
            Ok(col2im(&dcols, x.shape(), self.ksize))
        }
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
