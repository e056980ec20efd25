//! Dense row-major tensors and the reverse-mode tape built on top of them.
//!
//! [`Tensor`] is a plain value. Anything that needs gradients goes through a
//! [`Tape`], which hands out [`Var`] handles; a tensor that never entered a
//! tape has no node and cannot be differentiated.

mod adam;
mod param;
mod tape;

pub use adam::Adam;
pub use param::{load_checkpoint, save_checkpoint, ParamStore, Parameter};
pub use tape::{Tape, Var};

use std::fmt::Debug;

use crate::error::{Error, Result};

/// Scalar element type. Training runs in `f32`, gradient checks in `f64`.
pub trait Element:
    num_traits::Float + Default + Debug + Send + Sync + std::iter::Sum + 'static
{
    /// `c = alpha * op(a) * op(b) + beta * c` with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        c: &mut [Self],
    );

    fn from_f64(x: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Element for f32 {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f32],
        rsa: isize,
        csa: isize,
        b: &[f32],
        rsb: isize,
        csb: isize,
        c: &mut [f32],
    ) {
        debug_assert_eq!(c.len(), m * n);
        // SAFETY: strides describe in-bounds views of `a` ([m,k]) and `b` ([k,n]);
        // `c` is a dense [m,n] buffer.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                0.0,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }

    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[f64],
        rsa: isize,
        csa: isize,
        b: &[f64],
        rsb: isize,
        csb: isize,
        c: &mut [f64],
    ) {
        debug_assert_eq!(c.len(), m * n);
        // SAFETY: see the f32 impl.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                0.0,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }

    fn from_f64(x: f64) -> Self {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Dimension {
                op: "tensor",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
        }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// Builds a tensor from `f64` values, converting to the element type.
    pub fn from_f64(shape: impl Into<Vec<usize>>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&x| T::from_f64(x)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    /// The single element of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.as_f64()).collect()
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| U::from_f64(x.as_f64())).collect(),
        }
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Matrix product of rank-2 tensors with optional transposition of either side.
    pub fn matmul_t(&self, other: &Tensor<T>, ta: bool, tb: bool) -> Result<Self> {
        let mismatch = || Error::Dimension {
            op: "matmul",
            lhs: self.shape.clone(),
            rhs: other.shape.clone(),
        };
        if self.rank() != 2 || other.rank() != 2 {
            return Err(mismatch());
        }
        let (ar, ac) = (self.shape[0], self.shape[1]);
        let (br, bc) = (other.shape[0], other.shape[1]);
        let (m, k, rsa, csa) = if ta {
            (ac, ar, 1, ac as isize)
        } else {
            (ar, ac, ac as isize, 1)
        };
        let (k2, n, rsb, csb) = if tb {
            (bc, br, 1, bc as isize)
        } else {
            (br, bc, bc as isize, 1)
        };
        if k != k2 {
            return Err(mismatch());
        }
        let mut out = vec![T::zero(); m * n];
        if m > 0 && n > 0 && k > 0 {
            T::gemm(m, k, n, &self.data, rsa, csa, &other.data, rsb, csb, &mut out);
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn matmul(&self, other: &Tensor<T>) -> Result<Self> {
        self.matmul_t(other, false, false)
    }

    /// Elementwise binary op with trailing-dimension broadcasting: the shorter
    /// operand's shape must equal the trailing dimensions of the longer one.
    pub fn zip_with(&self, other: &Tensor<T>, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape == other.shape {
            let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
            return Ok(Tensor {
                shape: self.shape.clone(),
                data,
            });
        }
        let mismatch = || Error::Dimension {
            op,
            lhs: self.shape.clone(),
            rhs: other.shape.clone(),
        };
        if is_suffix(&other.shape, &self.shape) {
            let inner = other.data.len().max(1);
            let mut data = Vec::with_capacity(self.data.len());
            for chunk in self.data.chunks(inner) {
                data.extend(chunk.iter().zip(&other.data).map(|(&a, &b)| f(a, b)));
            }
            Ok(Tensor {
                shape: self.shape.clone(),
                data,
            })
        } else if is_suffix(&self.shape, &other.shape) {
            let inner = self.data.len().max(1);
            let mut data = Vec::with_capacity(other.data.len());
            for chunk in other.data.chunks(inner) {
                data.extend(self.data.iter().zip(chunk).map(|(&a, &b)| f(a, b)));
            }
            Ok(Tensor {
                shape: other.shape.clone(),
                data,
            })
        } else {
            Err(mismatch())
        }
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Self> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|x| x * c)
    }

    pub fn exp(&self) -> Self {
        self.map(T::exp)
    }

    pub fn leaky_relu(&self, alpha: T) -> Self {
        self.map(|x| if x > T::zero() { x } else { alpha * x })
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::from_f64(self.data.len() as f64)
    }

    fn split_axis(&self, axis: usize) -> Result<(usize, usize, usize)> {
        if axis >= self.rank() {
            return Err(Error::Axis {
                axis,
                rank: self.rank(),
            });
        }
        let outer = self.shape[..axis].iter().product();
        let inner = self.shape[axis + 1..].iter().product();
        Ok((outer, self.shape[axis], inner))
    }

    /// Sum along `axis`, removing it.
    pub fn sum_axis(&self, axis: usize) -> Result<Self> {
        let (outer, size, inner) = self.split_axis(axis)?;
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for s in 0..size {
                let src = &self.data[(o * size + s) * inner..(o * size + s + 1) * inner];
                for (d, &x) in dst.iter_mut().zip(src) {
                    *d = *d + x;
                }
            }
        }
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Ok(Tensor { shape, data: out })
    }

    /// Maximum along `axis`, removing it. Also returns, for every output
    /// element, the flat input index of the (first) maximizing entry.
    pub fn max_axis(&self, axis: usize) -> Result<(Self, Vec<usize>)> {
        let (outer, size, inner) = self.split_axis(axis)?;
        if size == 0 {
            return Err(Error::InvalidArgument("max over an empty axis".into()));
        }
        let mut out = self.data[..0].to_vec();
        out.reserve(outer * inner);
        let mut arg = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = o * size * inner;
            out.extend_from_slice(&self.data[base..base + inner]);
            arg.extend((0..inner).map(|i| base + i));
            let dst = &mut out[o * inner..];
            let idx = &mut arg[o * inner..];
            for s in 1..size {
                let row = base + s * inner;
                for i in 0..inner {
                    let v = self.data[row + i];
                    if v > dst[i] {
                        dst[i] = v;
                        idx[i] = row + i;
                    }
                }
            }
        }
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Ok((Tensor { shape, data: out }, arg))
    }

    /// Inserts a new axis at `axis` of length `size`, repeating the values.
    pub fn expand_axis(&self, axis: usize, size: usize) -> Result<Self> {
        if axis > self.rank() {
            return Err(Error::Axis {
                axis,
                rank: self.rank(),
            });
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis..].iter().product();
        let mut data = Vec::with_capacity(outer * size * inner);
        for o in 0..outer {
            let src = &self.data[o * inner..(o + 1) * inner];
            for _ in 0..size {
                data.extend_from_slice(src);
            }
        }
        let mut shape = self.shape.clone();
        shape.insert(axis, size);
        Ok(Tensor { shape, data })
    }

    /// Sums leading dimensions away so the result has shape `target`, which
    /// must be a suffix of this tensor's shape.
    pub fn sum_to(&self, target: &[usize]) -> Result<Self> {
        if !is_suffix(target, &self.shape) {
            return Err(Error::Dimension {
                op: "sum_to",
                lhs: self.shape.clone(),
                rhs: target.to_vec(),
            });
        }
        let inner: usize = target.iter().product();
        let mut out = vec![T::zero(); inner];
        for chunk in self.data.chunks(inner.max(1)) {
            for (d, &x) in out.iter_mut().zip(chunk) {
                *d = *d + x;
            }
        }
        Ok(Tensor {
            shape: target.to_vec(),
            data: out,
        })
    }

    /// Tiles this tensor over leading dimensions to reach `target`.
    pub fn broadcast_to(&self, target: &[usize]) -> Result<Self> {
        if !is_suffix(&self.shape, target) {
            return Err(Error::Dimension {
                op: "broadcast_to",
                lhs: self.shape.clone(),
                rhs: target.to_vec(),
            });
        }
        let reps: usize = target[..target.len() - self.rank()].iter().product();
        let mut data = Vec::with_capacity(reps * self.numel());
        for _ in 0..reps {
            data.extend_from_slice(&self.data);
        }
        Ok(Tensor {
            shape: target.to_vec(),
            data,
        })
    }

    /// `out[i] = self[index[i]]` over flat storage.
    pub fn gather(&self, index: &[usize], shape: impl Into<Vec<usize>>) -> Result<Self> {
        if let Some(&bad) = index.iter().find(|&&i| i >= self.numel()) {
            return Err(Error::InvalidArgument(format!(
                "gather index {bad} out of range for {} elements",
                self.numel()
            )));
        }
        Tensor::new(shape, index.iter().map(|&i| self.data[i]).collect())
    }

    /// `out[index[i]] += self[i]` into a zero tensor of `shape`.
    pub fn scatter_add(&self, index: &[usize], shape: impl Into<Vec<usize>>) -> Result<Self> {
        let mut out = Tensor::zeros(shape);
        if index.len() != self.numel() {
            return Err(Error::Dimension {
                op: "scatter_add",
                lhs: self.shape.clone(),
                rhs: vec![index.len()],
            });
        }
        for (&i, &x) in index.iter().zip(&self.data) {
            let slot = out.data.get_mut(i).ok_or_else(|| {
                Error::InvalidArgument(format!("scatter index {i} out of range"))
            })?;
            *slot = *slot + x;
        }
        Ok(out)
    }
}

pub(crate) fn is_suffix(short: &[usize], long: &[usize]) -> bool {
    short.len() <= long.len() && long[long.len() - short.len()..] == *short
}
