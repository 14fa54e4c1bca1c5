//! Lists parameter counts over the (blocks, reduction, repetition) grid and
//! the kernel-size sweep, and runs one forward pass of the default model.

use modclass::model::{ModelConfig, SeMsfn, HYPERPARAMETER_GRID, KERNEL_SIZES};
use modclass::tensor::{NormMode, Tensor};

fn main() -> modclass::Result<()> {
    let base = ModelConfig::default();
    println!("{:>6} {:>9} {:>10} {:>10}", "blocks", "reduction", "repetition", "params");
    for row in HYPERPARAMETER_GRID {
        let cfg = base.with_grid_row(row);
        println!("{:>6} {:>9} {:>10} {:>10}", row.0, row.1, row.2, cfg.param_count());
    }
    println!();
    for k in KERNEL_SIZES {
        let cfg = ModelConfig { kernel_size: k, ..base };
        let plain = ModelConfig { se_enabled: false, ..cfg };
        println!("k = {k:>2}: {:>7} params ({} without SE)", cfg.param_count(), plain.param_count());
    }

    let mut model = SeMsfn::<f32>::new(base, 0)?;
    let x = Tensor::from_fn([2, base.input_length, 2], |_, l, c| ((l * (c + 1)) as f32 * 0.01).sin());
    let logits = model.forward(&x, NormMode::Infer)?;
    println!("\nforward {:?} -> {:?}", x.shape(), logits.shape());
    Ok(())
}
