use serde::{Deserialize, Serialize};

use super::gemm::{gemm, MatRef};
use super::{Real, Tensor};
use crate::error::{invalid, shape_err, Result};

/// Border handling for [`conv1d_forward`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Output length `ceil(L / stride)`; zero padding, the odd element on the right.
    Same,
    /// No padding; output length `floor((L - k) / stride) + 1`.
    Valid,
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    k: usize,
    stride: usize,
    l_in: usize,
    l_out: usize,
    pad_left: usize,
    c_in: usize,
    c_out: usize,
}

pub fn conv1d_output_len(length: usize, k: usize, stride: usize, padding: Padding) -> Result<usize> {
    if k == 0 || stride == 0 {
        return Err(invalid!("kernel size and stride must be >= 1"));
    }
    let out = match padding {
        Padding::Same => length.div_ceil(stride),
        Padding::Valid if length >= k => (length - k) / stride + 1,
        Padding::Valid => 0,
    };
    if out == 0 {
        return Err(shape_err!(
            "conv over length {length} with k={k} stride={stride} ({padding:?}) has no output"
        ));
    }
    Ok(out)
}

fn geometry<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Geometry> {
    let [k, c_in, c_out] = weights.shape();
    if input.channels() != c_in {
        return Err(shape_err!(
            "conv expects {} input channels, got {}",
            c_in,
            input.channels()
        ));
    }
    let l_in = input.length();
    let l_out = conv1d_output_len(l_in, k, stride, padding)?;
    let pad_left = match padding {
        Padding::Same => ((l_out - 1) * stride + k).saturating_sub(l_in) / 2,
        Padding::Valid => 0,
    };
    Ok(Geometry {
        k,
        stride,
        l_in,
        l_out,
        pad_left,
        c_in,
        c_out,
    })
}

impl Geometry {
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1
    }

    fn patch_len(&self) -> usize {
        self.k * self.c_in
    }

    /// Lays out receptive fields as rows: `cols[o, t * c_in + c]`.
    fn im2col<T: Real>(&self, x: &[T], cols: &mut [T]) {
        let width = self.patch_len();
        for o in 0..self.l_out {
            let row = &mut cols[o * width..(o + 1) * width];
            for t in 0..self.k {
                let dst = &mut row[t * self.c_in..(t + 1) * self.c_in];
                match self.source_position(o, t) {
                    Some(p) => dst.copy_from_slice(&x[p * self.c_in..(p + 1) * self.c_in]),
                    None => dst.fill(T::zero()),
                }
            }
        }
    }

    fn col2im_add<T: Real>(&self, cols: &[T], gx: &mut [T]) {
        let width = self.patch_len();
        for o in 0..self.l_out {
            let row = &cols[o * width..(o + 1) * width];
            for t in 0..self.k {
                if let Some(p) = self.source_position(o, t) {
                    let src = &row[t * self.c_in..(t + 1) * self.c_in];
                    for (g, &v) in gx[p * self.c_in..(p + 1) * self.c_in].iter_mut().zip(src) {
                        *g += v;
                    }
                }
            }
        }
    }

    fn source_position(&self, o: usize, t: usize) -> Option<usize> {
        let p = (o * self.stride + t).checked_sub(self.pad_left)?;
        (p < self.l_in).then_some(p)
    }
}

/// Target GEMM height when several samples share one call.
const GROUP_ROWS: usize = 1024;

impl Geometry {
    /// Samples per GEMM call.
    fn group(&self, batch: usize) -> usize {
        (GROUP_ROWS / self.l_out).clamp(1, batch.max(1))
    }

    /// im2col of `n` consecutive samples into `cols`, one block per sample.
    fn im2col_group<T: Real>(&self, x: &[T], n: usize, cols: &mut [T]) {
        let (xs, cs) = (self.l_in * self.c_in, self.l_out * self.patch_len());
        for s in 0..n {
            self.im2col(&x[s * xs..(s + 1) * xs], &mut cols[s * cs..(s + 1) * cs]);
        }
    }
}

/// 1-D cross-correlation. `weights` has shape `[k, c_in, c_out]`.
pub fn conv1d_forward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &[T],
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let g = geometry(input, weights, stride, padding)?;
    if bias.len() != g.c_out {
        return Err(shape_err!("bias length {} != c_out {}", bias.len(), g.c_out));
    }
    let batch = input.batch();
    let rows = batch * g.l_out;
    let mut data = Vec::with_capacity(rows * g.c_out);
    for _ in 0..rows {
        data.extend_from_slice(bias);
    }
    let mut out = Tensor::new([batch, g.l_out, g.c_out], data)?;
    let w = MatRef::new(weights.data(), g.patch_len(), g.c_out);
    if g.is_pointwise() {
        gemm(MatRef::new(input.data(), rows, g.c_in), w, T::one(), out.data_mut());
        return Ok(out);
    }
    let group = g.group(batch);
    let mut cols = vec![T::zero(); group * g.l_out * g.patch_len()];
    let (xs, ys) = (g.l_in * g.c_in, g.l_out * g.c_out);
    for first in (0..batch).step_by(group) {
        let n = group.min(batch - first);
        let x = &input.data()[first * xs..(first + n) * xs];
        g.im2col_group(x, n, &mut cols);
        let a = MatRef::new(&cols, n * g.l_out, g.patch_len());
        gemm(a, w, T::one(), &mut out.data_mut()[first * ys..(first + n) * ys]);
    }
    Ok(out)
}

/// Gradients of [`conv1d_forward`] with respect to all three operands.
#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

pub fn conv1d_backward<T: Real>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weights: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<ConvGrads<T>> {
    let g = geometry(input, weights, stride, padding)?;
    let batch = input.batch();
    if grad_out.shape() != [batch, g.l_out, g.c_out] {
        return Err(shape_err!(
            "conv grad {:?} does not match forward output {:?}",
            grad_out.shape(),
            [batch, g.l_out, g.c_out]
        ));
    }
    let width = g.patch_len();
    let mut grad_w = Tensor::zeros(weights.shape());
    let mut grad_b = vec![T::zero(); g.c_out];
    for row in grad_out.data().chunks_exact(g.c_out) {
        for (acc, &v) in grad_b.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let w = MatRef::new(weights.data(), width, g.c_out);
    let rows = batch * g.l_out;

    if g.is_pointwise() {
        let gy = MatRef::new(grad_out.data(), rows, g.c_out);
        let mut grad_in = Tensor::zeros(input.shape());
        gemm(MatRef::new(input.data(), rows, width).t(), gy, T::one(), grad_w.data_mut());
        gemm(gy, w.t(), T::zero(), grad_in.data_mut());
        return Ok(ConvGrads {
            input: grad_in,
            weights: grad_w,
            bias: grad_b,
        });
    }

    let mut grad_in = Tensor::zeros(input.shape());
    let group = g.group(batch);
    let mut cols = vec![T::zero(); group * g.l_out * width];
    let mut gcols = vec![T::zero(); group * g.l_out * width];
    let (xs, ys, cs) = (g.l_in * g.c_in, g.l_out * g.c_out, g.l_out * width);
    for first in (0..batch).step_by(group) {
        let n = group.min(batch - first);
        let gy = MatRef::new(&grad_out.data()[first * ys..(first + n) * ys], n * g.l_out, g.c_out);
        g.im2col_group(&input.data()[first * xs..(first + n) * xs], n, &mut cols);
        gemm(MatRef::new(&cols, n * g.l_out, width).t(), gy, T::one(), grad_w.data_mut());
        gemm(gy, w.t(), T::zero(), &mut gcols);
        let gx = &mut grad_in.data_mut()[first * xs..(first + n) * xs];
        for s in 0..n {
            g.col2im_add(&gcols[s * cs..(s + 1) * cs], &mut gx[s * xs..(s + 1) * xs]);
        }
    }
    Ok(ConvGrads {
        input: grad_in,
        weights: grad_w,
        bias: grad_b,
    })
}
