//! Save a model, reload it and confirm the predictions are bit-for-bit identical.

use highway_lstm::neural::{init_params, load_checkpoint, model_forward, save_checkpoint, CheckpointMeta, Tensor, Variant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("reference.ckpt");
    let params = init_params(&Variant::Reference.config(20), 42)?;
    save_checkpoint(&path, &params, CheckpointMeta { seed: 42, step: 0 })?;
    let bytes = std::fs::read(&path)?;
    let header_end = bytes.windows(4).position(|w| w == b"end\n").map_or(0, |p| p + 4);
    println!("{}", String::from_utf8_lossy(&bytes[..header_end]));
    println!("{} bytes, {} parameters", bytes.len(), params.parameter_count());

    let (loaded, meta) = load_checkpoint(&path)?;
    let x = Tensor::from_vec(&[50, 49], (0..50 * 49).map(|i| (i as f64 * 0.37).sin()).collect())?;
    let (a, _) = model_forward(&params, &x, &params.initial_states())?;
    let (b, _) = model_forward(&loaded, &x, &loaded.initial_states())?;
    println!("seed {}, outputs identical: {}", meta.seed, a == b);
    Ok(())
}
