//! Dense tensors, the reverse-mode tape built on them, and the numeric
//! kernels (convolution, GEMM) the rest of the crate composes.

mod autograd;
mod checkpoint;
mod conv;
mod gemm;
mod gradcheck;
mod optim;

use std::fmt;

use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};

pub use autograd::{Graph, Var};
pub(crate) use autograd::{patch_permute, sigmoid};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use conv::{conv2d_output_size, deconv2d_output_size};
pub use gradcheck::{grad_check, grad_check_at, GradCheckConfig, GradCheckReport, SlotReport};
pub use optim::{adam_step, Adam, AdamConfig, AdamState};

/// Floating-point element type. Training runs in `f32`, gradient checks in `f64`.
pub trait Element:
    Float + Default + fmt::Debug + fmt::Display + Send + Sync + std::iter::Sum + 'static
{
    /// Checkpoint dtype tag.
    const DTYPE: u8;

    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn to_le_bytes_vec(data: &[Self]) -> Vec<u8>;
    fn from_le_chunk(chunk: &[u8]) -> Self;

    /// `c = alpha * a(m×k) · b(k×n) + beta * c`, all row-major with explicit strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    );
}

impl Element for f32 {
    const DTYPE: u8 = 0;

    fn of_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn to_le_bytes_vec(data: &[Self]) -> Vec<u8> {
        data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
    fn from_le_chunk(chunk: &[u8]) -> Self {
        f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"))
    }
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    ) {
        gemm::check_extents(m, k, n, a.len(), rsa, csa, b.len(), rsb, csb, c.len());
        // SAFETY: extents checked above; c is dense row-major m×n.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                alpha,
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
}

impl Element for f64 {
    const DTYPE: u8 = 1;

    fn of_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn to_le_bytes_vec(data: &[Self]) -> Vec<u8> {
        data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
    fn from_le_chunk(chunk: &[u8]) -> Self {
        f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"))
    }
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    ) {
        gemm::check_extents(m, k, n, a.len(), rsa, csa, b.len(), rsb, csb, c.len());
        // SAFETY: extents checked above; c is dense row-major m×n.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                alpha,
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
}

/// Row-major N-dimensional array.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(value: T) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| T::of_f64(v)).collect())
    }

    pub fn rand_uniform<R: Rng + ?Sized>(shape: &[usize], low: f64, high: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::of_f64(rng.gen_range(low..high))).collect();
        Self { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
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

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    /// First element; intended for scalar tensors.
    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| U::of_f64(v.as_f64())).collect() }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        ensure_same_shape("zip_map", &self.shape, &other.shape)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// Sub-tensor `index` along the leading axis.
    pub fn index0(&self, index: usize) -> Result<Self> {
        let lead = *self.shape.first().ok_or_else(|| Error::Shape("index0 on rank-0 tensor".into()))?;
        if index >= lead {
            return Err(Error::Shape(format!("index {index} out of range for leading dim {lead}")));
        }
        let inner: usize = self.shape[1..].iter().product();
        Ok(Self { shape: self.shape[1..].to_vec(), data: self.data[index * inner..(index + 1) * inner].to_vec() })
    }

    /// Stack equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Self]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::Shape("stack of zero tensors".into()))?;
        let mut data = Vec::with_capacity(first.numel() * items.len());
        for t in items {
            ensure_same_shape("stack", &first.shape, &t.shape)?;
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Self { shape, data })
    }
}

pub(crate) fn ensure_same_shape(op: &str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{op}: shape mismatch {a:?} vs {b:?}")));
    }
    Ok(())
}

pub(crate) fn dims4(op: &str, shape: &[usize]) -> Result<[usize; 4]> {
    match *shape {
        [n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(Error::Shape(format!("{op}: expected rank-4 tensor, got {shape:?}"))),
    }
}
