//! Shows squeeze-and-excitation recalibration: per-channel scales from a
//! freshly initialized block, and the neutral 0.5 gate when its weights are
//! zeroed.

use modclass::model::{se_hidden, Init, SeBlock};
use modclass::tensor::{NormMode, Tensor};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> modclass::Result<()> {
    let (channels, reduction) = (8, 2);
    let mut se = SeBlock::<f32>::new("se", channels, reduction, &mut Init::new(ChaCha8Rng::seed_from_u64(4)));
    println!("{channels} channels, reduction {reduction}: hidden width {}", se_hidden(channels, reduction));

    // Channel c carries a constant c, so the squeeze sees distinct energies.
    let u = Tensor::from_fn([1, 32, channels], |_, _, c| c as f32);
    let scale = se.scale(&u, NormMode::Infer)?;
    println!("scales: {:.3?}", scale.sample(0));

    let hidden = se.fc1.bias.numel();
    se.fc1.set(&vec![0.0; channels * hidden], &vec![0.0; hidden])?;
    se.fc2.set(&vec![0.0; channels * hidden], &vec![0.0; channels])?;
    let y = se.forward(&u, NormMode::Infer)?;
    println!("zeroed block, last position: {:.2?}", &y.sample(0)[31 * channels..]);
    Ok(())
}
