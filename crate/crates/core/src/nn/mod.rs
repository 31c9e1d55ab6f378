//! Differentiable building blocks with hand-written forward and backward
//! passes.
//!
//! Every layer caches what it needs during a [`Mode::Train`] forward call and
//! accumulates parameter gradients into its [`Param`]s on `backward`. Layers
//! are generic over [`Scalar`] so the same code runs in `f32` for training
//! and in `f64` for finite-difference gradient checks.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{shape_err, Result};

pub mod adam;
pub mod batchnorm;
pub mod checkpoint;
pub mod conv;
pub mod init;
pub mod lstm;
pub mod pool;
pub mod tconv;

pub use adam::{Adam, AdamConfig};
pub use batchnorm::BatchNorm;
pub use conv::Conv2d;
pub use lstm::Lstm;
pub use pool::{MaxPool2, Relu};
pub use tconv::ConvTranspose3x3S2;

/// Floating-point element type for tensors and parameters.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Default + Send + Sync + 'static
{
    /// `c = alpha * a * b + beta * c` on strided row/column-major views.
    ///
    /// # Safety
    /// The pointers and strides must describe in-bounds `m×k`, `k×n` and
    /// `m×n` views, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    #[inline]
    fn cast(v: f64) -> Self {
        Self::from_f64(v).expect("f64 representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("finite cast")
    }
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major matrix product `c (+)= op(a) · op(b)`.
///
/// `a` is logically `m×k` (stored `k×m` when `a_t`), `b` is logically `k×n`
/// (stored `n×k` when `b_t`), `c` is `m×n`. With `accumulate` the product is
/// added to `c`, otherwise `c` is overwritten.
#[allow(clippy::too_many_arguments)]
pub fn matmul<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_t: bool,
    b: &[T],
    b_t: bool,
    c: &mut [T],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "matmul: lhs length");
    assert_eq!(b.len(), k * n, "matmul: rhs length");
    assert_eq!(c.len(), m * n, "matmul: output length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.iter_mut().for_each(|v| *v = T::zero());
        }
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: lengths checked above; strides describe the stated layouts.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        )
    }
}

/// Forward-pass mode. Batch norm uses batch statistics and layers keep
/// activation caches only in `Train`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Dense `(batch, height, width, channels)` array, channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(n: usize, h: usize, w: usize, c: usize) -> Self {
        Self {
            n,
            h,
            w,
            c,
            data: vec![T::zero(); n * h * w * c],
        }
    }

    pub fn from_vec(n: usize, h: usize, w: usize, c: usize, data: Vec<T>) -> Result<Self> {
        if n == 0 || h == 0 || w == 0 || c == 0 {
            return shape_err(format!("tensor dims must be >= 1, got ({n},{h},{w},{c})"));
        }
        if data.len() != n * h * w * c {
            return shape_err(format!(
                "({n},{h},{w},{c}) needs {} values, got {}",
                n * h * w * c,
                data.len()
            ));
        }
        Ok(Self { n, h, w, c, data })
    }

    pub fn from_fn(n: usize, h: usize, w: usize, c: usize, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * h * w * c);
        for b in 0..n {
            for y in 0..h {
                for x in 0..w {
                    for ch in 0..c {
                        data.push(f(b, y, x, ch));
                    }
                }
            }
        }
        Self { n, h, w, c, data }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.h, self.w, self.c]
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn h(&self) -> usize {
        self.h
    }
    pub fn w(&self) -> usize {
        self.w
    }
    pub fn c(&self) -> usize {
        self.c
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, b: usize, y: usize, x: usize, ch: usize) -> usize {
        ((b * self.h + y) * self.w + x) * self.c + ch
    }

    #[inline]
    pub fn at(&self, b: usize, y: usize, x: usize, ch: usize) -> T {
        self.data[self.index(b, y, x, ch)]
    }

    /// Contiguous slice holding one batch element.
    pub fn image(&self, b: usize) -> &[T] {
        let sz = self.h * self.w * self.c;
        &self.data[b * sz..(b + 1) * sz]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            n: self.n,
            h: self.h,
            w: self.w,
            c: self.c,
            data: self.data.iter().map(|v| U::cast(v.f64())).collect(),
        }
    }

    pub fn dot(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    /// Channel-wise concatenation `[self | other]`.
    pub fn concat_channels(&self, other: &Self) -> Result<Self> {
        if (self.n, self.h, self.w) != (other.n, other.h, other.w) {
            return shape_err(format!(
                "concat: {:?} vs {:?}",
                self.shape(),
                other.shape()
            ));
        }
        let c = self.c + other.c;
        let mut data = Vec::with_capacity(self.n * self.h * self.w * c);
        for (a, b) in self.data.chunks(self.c).zip(other.data.chunks(other.c)) {
            data.extend_from_slice(a);
            data.extend_from_slice(b);
        }
        Ok(Self {
            c,
            data,
            ..*self
        })
    }

    /// Splits channels at `first`, the inverse of [`Tensor4::concat_channels`].
    pub fn split_channels(&self, first: usize) -> Result<(Self, Self)> {
        if first == 0 || first >= self.c {
            return shape_err(format!("cannot split {} channels at {first}", self.c));
        }
        let second = self.c - first;
        let pixels = self.n * self.h * self.w;
        let mut a = Vec::with_capacity(pixels * first);
        let mut b = Vec::with_capacity(pixels * second);
        for px in self.data.chunks(self.c) {
            a.extend_from_slice(&px[..first]);
            b.extend_from_slice(&px[first..]);
        }
        Ok((
            Self {
                c: first,
                data: a,
                ..*self
            },
            Self {
                c: second,
                data: b,
                ..*self
            },
        ))
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return shape_err(format!("add: {:?} vs {:?}", self.shape(), other.shape()));
        }
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, &b)| *a = *a + b);
        Ok(())
    }
}

/// A named parameter tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
    /// Optimizers skip non-trainable entries (batch-norm running statistics).
    pub trainable: bool,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = vec![T::zero(); value.len()];
        Self {
            name: name.into(),
            shape,
            value,
            grad,
            trainable: true,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self::new(name, shape, vec![T::zero(); len])
    }

    pub fn frozen(mut self) -> Self {
        self.trainable = false;
        self
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// Common interface of the single-input layers.
pub trait Layer<T: Scalar> {
    fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>>;

    /// Propagates `dy` through the cached forward pass, accumulating parameter
    /// gradients and returning the input gradient.
    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>>;

    fn params(&self) -> Vec<&Param<T>>;

    fn params_mut(&mut self) -> Vec<&mut Param<T>>;
}

pub(crate) fn missing_cache<T>(layer: &str) -> Result<T> {
    shape_err(format!("{layer}: backward called without a training forward pass"))
}
