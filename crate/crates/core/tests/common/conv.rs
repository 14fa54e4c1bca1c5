//! conv1d against a direct nested-loop oracle.

#![allow(dead_code)]

use modclass::tensor::{conv1d_forward, Padding, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Products accumulated in (tap, input channel) order from zero, bias added
/// last. Uses a fused multiply-add per term when the CPU kernel does.
fn oracle(x: &[f32], l: usize, c_in: usize, w: &[f32], k: usize, c_out: usize, bias: &[f32], stride: usize, padding: Padding) -> Vec<f32> {
    let fused = fused_kernel();
    let l_out = match padding {
        Padding::Same => (l + stride - 1) / stride,
        Padding::Valid => (l - k) / stride + 1,
    };
    let pad_left = match padding {
        Padding::Same => ((l_out - 1) * stride + k).saturating_sub(l) / 2,
        Padding::Valid => 0,
    };
    let mut out = vec![0.0; l_out * c_out];
    for o in 0..l_out {
        for co in 0..c_out {
            let mut acc = 0.0f32;
            for t in 0..k {
                for ci in 0..c_in {
                    let pos = (o * stride + t) as isize - pad_left as isize;
                    let xv = if pos >= 0 && (pos as usize) < l { x[pos as usize * c_in + ci] } else { 0.0 };
                    let wv = w[(t * c_in + ci) * c_out + co];
                    acc = if fused { xv.mul_add(wv, acc) } else { acc + xv * wv };
                }
            }
            out[o * c_out + co] = acc + bias[co];
        }
    }
    out
}

fn fused_kernel() -> bool {
    #[cfg(any(target_arch = "x86", target_arch = "x86_64"))]
    {
        is_x86_feature_detected!("fma") && is_x86_feature_detected!("avx2")
            || is_x86_feature_detected!("avx512f")
    }
    #[cfg(target_arch = "aarch64")]
    {
        true
    }
    #[cfg(not(any(target_arch = "x86", target_arch = "x86_64", target_arch = "aarch64")))]
    {
        false
    }
}

/// Sweeps every shape with L <= 16, k <= 5, channels <= 3, both strides and
/// both paddings; returns the number of shapes or the first mismatch.
pub fn sweep() -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut cases = 0;
    for l in 1..=16 {
        for k in 1..=5 {
            for c_in in 1..=3 {
                for c_out in 1..=3 {
                    for stride in [1, 2] {
                        for padding in [Padding::Same, Padding::Valid] {
                            if padding == Padding::Valid && k > l {
                                continue;
                            }
                            let batch = 2;
                            let x = Tensor::from_fn([batch, l, c_in], |_, _, _| rng.gen_range(-1.0f32..1.0));
                            let w = Tensor::from_fn([k, c_in, c_out], |_, _, _| rng.gen_range(-1.0f32..1.0));
                            let bias: Vec<f32> = (0..c_out).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
                            let y = conv1d_forward(&x, &w, &bias, stride, padding).map_err(|e| e.to_string())?;
                            for b in 0..batch {
                                let want = oracle(x.sample(b), l, c_in, w.data(), k, c_out, &bias, stride, padding);
                                let got = y.sample(b);
                                if got.len() != want.len() || got.iter().zip(&want).any(|(g, e)| g.to_bits() != e.to_bits()) {
                                    return Err(format!("l={l} k={k} cin={c_in} cout={c_out} s={stride} {padding:?}"));
                                }
                            }
                            cases += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(cases)
}
