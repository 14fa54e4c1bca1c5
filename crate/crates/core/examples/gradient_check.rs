//! Checks the analytic input gradient of a strided convolution against
//! central differences, then shows how a doubled backward pass is caught.

use modclass::tensor::{conv1d_backward, conv1d_forward, grad_check, GradCheck, Padding, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SHAPE: [usize; 3] = [2, 11, 3];
const KERNEL: [usize; 3] = [5, 3, 4];
const STRIDE: usize = 2;

fn main() -> modclass::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut random = |shape: [usize; 3]| Tensor::<f64>::from_fn(shape, |_, _, _| rng.gen_range(-1.0..1.0));
    let x = random(SHAPE);
    let w = random(KERNEL);
    let bias = vec![0.1; KERNEL[2]];
    let out = conv1d_forward(&x, &w, &bias, STRIDE, Padding::Same)?;
    // Projecting onto a fixed random direction makes the loss scalar.
    let r = random(out.shape());

    let loss = |point: &[f64]| -> modclass::Result<f64> {
        let x = Tensor::new(SHAPE, point.to_vec())?;
        let y = conv1d_forward(&x, &w, &bias, STRIDE, Padding::Same)?;
        Ok(y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum())
    };
    let grads = conv1d_backward(&r, &x, &w, STRIDE, Padding::Same)?;
    let opts = GradCheck::new(1e-6);

    let report = grad_check(loss, x.data(), grads.input.data(), &opts)?;
    println!(
        "correct backward: max relative error {:.2e} over {} coordinates, passed = {}",
        report.max_rel_error,
        report.checked,
        report.passed()
    );

    let doubled: Vec<f64> = grads.input.data().iter().map(|g| 2.0 * g).collect();
    let report = grad_check(loss, x.data(), &doubled, &opts)?;
    println!(
        "doubled backward: max relative error {:.2} at coordinate {}, passed = {}",
        report.max_rel_error,
        report.worst_index,
        report.passed()
    );
    Ok(())
}
