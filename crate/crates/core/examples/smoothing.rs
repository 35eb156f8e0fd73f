//! Savitzky-Golay smoothing of a noisy position trace and its velocity estimate.

use highway_lstm::smoothing::{savgol_derivative, savgol_smooth, FilterSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = FilterSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // 12 m/s with 5 cm of measurement noise
    let truth: Vec<f64> = (0..60).map(|k| 12.0 * k as f64 * spec.sample_period).collect();
    let noisy: Vec<f64> = truth.iter().map(|y| y + rng.random_range(-0.05..0.05)).collect();
    let smooth = savgol_smooth(&noisy, &spec)?;
    let speed = savgol_derivative(&noisy, &spec)?;
    println!("frame   raw y    smooth y   speed");
    for k in (0..60).step_by(6) {
        println!("{k:>5} {:>8.3} {:>10.3} {:>7.3}", noisy[k], smooth[k], speed[k]);
    }
    let rms = |a: &[f64]| (a.iter().zip(&truth).map(|(v, t)| (v - t).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
    println!("position RMS error: raw {:.4} m, smoothed {:.4} m", rms(&noisy), rms(&smooth));
    Ok(())
}
