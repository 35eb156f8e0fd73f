//! Compare backpropagation-through-time gradients against central finite differences.

use highway_lstm::neural::{gradient_check, init_params, Tensor, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for variant in Variant::ALL {
        let config = variant.config(4).scaled(6);
        let params = init_params(&config, 1)?;
        let steps = 12;
        let x = Tensor::from_vec(&[steps, config.input_size], (0..steps * config.input_size).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let y = Tensor::from_vec(&[steps, 4], (0..steps * 4).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let report = gradient_check(&params, &x, &y, 1e-5)?;
        println!(
            "{:<18} {:>5} parameters  max relative error {:.2e}",
            variant.name(),
            report.coordinates,
            report.max_relative_error
        );
    }
    Ok(())
}
