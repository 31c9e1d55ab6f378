//! 3×3 transposed convolution with stride 2 that exactly doubles the spatial
//! size. It is the adjoint of [`conv3x3_s2`], a stride-2 convolution with one
//! row/column of trailing zero padding.

use rand::Rng;

use super::{init, matmul, missing_cache, Layer, Mode, Param, Scalar, Tensor4};
use crate::error::{shape_err, Result};

/// Weights are stored `[cin, 3, 3, cout]`: a `cin × (9·cout)` matrix.
#[derive(Debug, Clone)]
pub struct ConvTranspose3x3S2<T> {
    pub cin: usize,
    pub cout: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor4<T>>,
}

/// Scatters `cols[(b,i,j), (a,e,co)]` onto `out[b, 2i+a, 2j+e, co]`.
fn scatter<T: Scalar>(cols: &[T], n: usize, h: usize, w: usize, cout: usize, out: &mut Tensor4<T>) {
    let (oh, ow) = (2 * h, 2 * w);
    let row_len = 9 * cout;
    let dst = out.data_mut();
    for b in 0..n {
        for i in 0..h {
            for j in 0..w {
                let row = ((b * h + i) * w + j) * row_len;
                for a in 0..3 {
                    let y = 2 * i + a;
                    if y >= oh {
                        continue;
                    }
                    for e in 0..3 {
                        let x = 2 * j + e;
                        if x >= ow {
                            continue;
                        }
                        let d = ((b * oh + y) * ow + x) * cout;
                        let s = row + (a * 3 + e) * cout;
                        for co in 0..cout {
                            dst[d + co] = dst[d + co] + cols[s + co];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`scatter`]: gathers the stride-2 3×3 patches of `big`.
fn gather<T: Scalar>(big: &Tensor4<T>, h: usize, w: usize) -> Vec<T> {
    let [n, oh, ow, cout] = big.shape();
    let row_len = 9 * cout;
    let mut cols = vec![T::zero(); n * h * w * row_len];
    let src = big.data();
    for b in 0..n {
        for i in 0..h {
            for j in 0..w {
                let row = ((b * h + i) * w + j) * row_len;
                for a in 0..3 {
                    let y = 2 * i + a;
                    if y >= oh {
                        continue;
                    }
                    for e in 0..3 {
                        let x = 2 * j + e;
                        if x >= ow {
                            continue;
                        }
                        let s = ((b * oh + y) * ow + x) * cout;
                        let d = row + (a * 3 + e) * cout;
                        cols[d..d + cout].copy_from_slice(&src[s..s + cout]);
                    }
                }
            }
        }
    }
    cols
}

impl<T: Scalar> ConvTranspose3x3S2<T> {
    pub fn zeros(name: &str, cin: usize, cout: usize) -> Self {
        Self {
            cin,
            cout,
            weight: Param::zeros(format!("{name}.weight"), vec![cin, 3, 3, cout]),
            bias: Param::zeros(format!("{name}.bias"), vec![cout]),
            input: None,
        }
    }

    pub fn he<R: Rng + ?Sized>(name: &str, cin: usize, cout: usize, rng: &mut R) -> Self {
        let mut t = Self::zeros(name, cin, cout);
        t.weight.value = init::he_normal(rng, 9 * cin, t.weight.len());
        t
    }
}

/// Stride-2 3×3 convolution sharing the transposed layer's kernel:
/// `(n, 2h, 2w, cout) → (n, h, w, cin)`, bias ignored.
pub fn conv3x3_s2<T: Scalar>(x: &Tensor4<T>, layer: &ConvTranspose3x3S2<T>) -> Result<Tensor4<T>> {
    let [n, oh, ow, c] = x.shape();
    if c != layer.cout || oh % 2 != 0 || ow % 2 != 0 {
        return shape_err(format!("conv3x3_s2: input {:?}", x.shape()));
    }
    let (h, w) = (oh / 2, ow / 2);
    let cols = gather(x, h, w);
    let mut out = vec![T::zero(); n * h * w * layer.cin];
    matmul(n * h * w, 9 * layer.cout, layer.cin, &cols, false, &layer.weight.value, true, &mut out, false);
    Tensor4::from_vec(n, h, w, layer.cin, out)
}

impl<T: Scalar> Layer<T> for ConvTranspose3x3S2<T> {
    fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        let [n, h, w, c] = x.shape();
        if c != self.cin {
            return shape_err(format!(
                "{}: expected {} input channels, got {c}",
                self.weight.name, self.cin
            ));
        }
        let mut cols = vec![T::zero(); n * h * w * 9 * self.cout];
        matmul(n * h * w, self.cin, 9 * self.cout, x.data(), false, &self.weight.value, false, &mut cols, false);
        let mut out = Tensor4::zeros(n, 2 * h, 2 * w, self.cout);
        scatter(&cols, n, h, w, self.cout, &mut out);
        for px in out.data_mut().chunks_mut(self.cout) {
            px.iter_mut()
                .zip(&self.bias.value)
                .for_each(|(o, &b)| *o = *o + b);
        }
        self.input = (mode == Mode::Train).then(|| x.clone());
        Ok(out)
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let Some(x) = self.input.as_ref() else {
            return missing_cache("transposed conv");
        };
        let [n, h, w, _] = x.shape();
        if dy.shape() != [n, 2 * h, 2 * w, self.cout] {
            return shape_err(format!("transposed conv backward: upstream {:?}", dy.shape()));
        }
        for px in dy.data().chunks(self.cout) {
            self.bias
                .grad
                .iter_mut()
                .zip(px)
                .for_each(|(g, &d)| *g = *g + d);
        }
        let dcols = gather(dy, h, w);
        let rows = n * h * w;
        matmul(self.cin, rows, 9 * self.cout, x.data(), true, &dcols, false, &mut self.weight.grad, true);
        let mut dx = vec![T::zero(); rows * self.cin];
        matmul(rows, 9 * self.cout, self.cin, &dcols, false, &self.weight.value, true, &mut dx, false);
        Tensor4::from_vec(n, h, w, self.cin, dx)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
