//! Dense rank-3 tensors and the forward/backward rules for every layer the
//! classifier uses.
//!
//! Everything is generic over [`Real`] so the same kernels run in `f32` for
//! training and in `f64` for finite-difference verification.

mod activation;
mod adam;
mod batchnorm;
pub mod checkpoint;
mod conv;
mod dense;
mod gemm;
pub mod gradcheck;
mod loss;
mod pool;
mod upsample;

pub use activation::{relu_backward, relu_forward, sigmoid, sigmoid_backward, sigmoid_forward};
pub use adam::{adam_step, AdamConfig, ParamSlot};
pub use batchnorm::{
    batchnorm1d_backward, batchnorm1d_forward, BatchNormCache, NormMode, RunningStats,
};
pub use conv::{conv1d_backward, conv1d_forward, conv1d_output_len, ConvGrads, Padding};
pub use dense::{dense_backward, dense_forward, DenseGrads};
pub use gradcheck::{grad_check, GradCheck, GradCheckReport};
pub use loss::{softmax, softmax_cross_entropy, LossOutput};
pub use pool::{global_avg_pool1d, global_avg_pool1d_backward};
pub use upsample::{upsample1d, upsample1d_backward};

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{shape_err, Error, Result};

/// Floating-point element type accepted by the engine.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Default
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    /// `c = a * b + beta * c` for row/column-strided operands.
    ///
    /// # Safety
    /// Pointers and strides must describe valid, non-overlapping matrices of
    /// the given dimensions.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
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

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal fits the float type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
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
        matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
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
        matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Dense `[batch, length, channels]` array stored row-major.
///
/// Matrices use a leading unit dimension (`[1, rows, cols]`), vectors two.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: [usize; 3],
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: [usize; 3], data: Vec<T>) -> Result<Self> {
        let expected = shape.iter().product::<usize>();
        if data.len() != expected {
            return Err(shape_err!(
                "{} values cannot fill shape {:?} ({} expected)",
                data.len(),
                shape,
                expected
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 3]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: [usize; 3], value: T) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.iter().product());
        for b in 0..shape[0] {
            for l in 0..shape[1] {
                for c in 0..shape[2] {
                    data.push(f(b, l, c));
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn length(&self) -> usize {
        self.shape[1]
    }

    pub fn channels(&self) -> usize {
        self.shape[2]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    pub fn at(&self, b: usize, l: usize, c: usize) -> T {
        self.data[(b * self.shape[1] + l) * self.shape[2] + c]
    }

    /// The `[length, channels]` slab of one batch element.
    pub fn sample(&self, b: usize) -> &[T] {
        let n = self.shape[1] * self.shape[2];
        &self.data[b * n..(b + 1) * n]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [T] {
        let n = self.shape[1] * self.shape[2];
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn reshape(mut self, shape: [usize; 3]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(shape_err!("cannot reshape {:?} into {:?}", self.shape, shape));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise sum; shapes must match exactly.
    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err!("cannot add {:?} and {:?}", self.shape, other.shape));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Fails with [`Error::NonFinite`] naming `what` if any entry is NaN/Inf.
    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    /// Concatenates along the channel axis. Batch and length must agree.
    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err!("nothing to concatenate"))?;
        let [b, l, _] = first.shape;
        if parts.iter().any(|p| p.shape[0] != b || p.shape[1] != l) {
            return Err(shape_err!("channel concat needs equal batch and length"));
        }
        let total: usize = parts.iter().map(|p| p.shape[2]).sum();
        let mut data = Vec::with_capacity(b * l * total);
        for row in 0..b * l {
            for p in parts {
                let c = p.shape[2];
                data.extend_from_slice(&p.data[row * c..(row + 1) * c]);
            }
        }
        Ok(Self {
            shape: [b, l, total],
            data,
        })
    }

    /// Inverse of [`Tensor::concat_channels`].
    pub fn split_channels(&self, widths: &[usize]) -> Result<Vec<Self>> {
        let [b, l, c] = self.shape;
        if widths.iter().sum::<usize>() != c {
            return Err(shape_err!("channel split {:?} does not cover {}", widths, c));
        }
        let mut outs: Vec<Vec<T>> = widths.iter().map(|w| Vec::with_capacity(b * l * w)).collect();
        for row in 0..b * l {
            let mut offset = row * c;
            for (out, &w) in outs.iter_mut().zip(widths) {
                out.extend_from_slice(&self.data[offset..offset + w]);
                offset += w;
            }
        }
        Ok(outs
            .into_iter()
            .zip(widths)
            .map(|(data, &w)| Self {
                shape: [b, l, w],
                data,
            })
            .collect())
    }
}
