use super::{Real, Tensor};
use crate::error::{invalid, shape_err, Result};

/// Nearest-neighbour repetition along the length axis.
pub fn upsample1d<T: Real>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor == 0 {
        return Err(invalid!("upsampling factor must be >= 1"));
    }
    let [b, l, c] = input.shape();
    let mut data = Vec::with_capacity(b * l * factor * c);
    for row in input.data().chunks_exact(c) {
        for _ in 0..factor {
            data.extend_from_slice(row);
        }
    }
    Tensor::new([b, l * factor, c], data)
}

/// Sums the gradient over each group of repeated positions.
pub fn upsample1d_backward<T: Real>(grad_out: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor == 0 {
        return Err(invalid!("upsampling factor must be >= 1"));
    }
    let [b, l, c] = grad_out.shape();
    if l % factor != 0 {
        return Err(shape_err!("length {l} is not a multiple of factor {factor}"));
    }
    let mut out = Tensor::zeros([b, l / factor, c]);
    for (dst, group) in out
        .data_mut()
        .chunks_exact_mut(c)
        .zip(grad_out.data().chunks_exact(c * factor))
    {
        for row in group.chunks_exact(c) {
            for (d, &g) in dst.iter_mut().zip(row) {
                *d += g;
            }
        }
    }
    Ok(out)
}
