use super::model::{forward_impl, model_backward, ModelParams};
use super::tensor::{ShapeError, Tensor};

/// Result of comparing analytic gradients with central finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Block name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

fn outputs_at(params: &ModelParams, sequence: &Tensor) -> Tensor {
    forward_impl(params, sequence, &params.initial_states(), None).0
}

/// `mse(plus) − mse(minus)` evaluated as Σ (p − m)(p + m − 2t) / n, which avoids
/// subtracting two nearly equal loss totals.
fn loss_difference(plus: &Tensor, minus: &Tensor, target: &Tensor) -> f64 {
    let n = plus.len().max(1) as f64;
    plus.data()
        .iter()
        .zip(minus.data())
        .zip(target.data())
        .map(|((p, m), t)| (p - m) * (p + m - 2.0 * t))
        .sum::<f64>()
        / n
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compares `analytic` against central differences with step `epsilon` over every
/// parameter coordinate.
pub fn compare_gradient(
    params: &ModelParams,
    sequence: &Tensor,
    target: &Tensor,
    analytic: &ModelParams,
    epsilon: f64,
) -> GradCheckReport {
    let mut probe = params.clone();
    let names: Vec<String> = params.blocks().into_iter().map(|(n, _)| n).collect();
    let grads: Vec<Vec<f64>> = analytic.blocks().into_iter().map(|(_, t)| t.data().to_vec()).collect();
    let mut report = GradCheckReport { max_relative_error: 0.0, worst: None, coordinates: 0 };
    for (b, name) in names.iter().enumerate() {
        for k in 0..grads[b].len() {
            let original = probe.blocks_mut()[b].data()[k];
            probe.blocks_mut()[b].data_mut()[k] = original + epsilon;
            let plus = outputs_at(&probe, sequence);
            probe.blocks_mut()[b].data_mut()[k] = original - epsilon;
            let minus = outputs_at(&probe, sequence);
            probe.blocks_mut()[b].data_mut()[k] = original;
            let numeric = loss_difference(&plus, &minus, target) / (2.0 * epsilon);
            let err = relative_error(grads[b][k], numeric);
            report.coordinates += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                report.worst = Some((name.clone(), k));
            }
        }
    }
    report
}

/// Maximum relative error between backpropagated gradients and central finite
/// differences for one window.
pub fn gradient_check(
    params: &ModelParams,
    sequence: &Tensor,
    target: &Tensor,
    epsilon: f64,
) -> Result<GradCheckReport, ShapeError> {
    let (analytic, _) = model_backward(params, sequence, target)?;
    Ok(compare_gradient(params, sequence, target, &analytic, epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::dense::Activation;
    use crate::neural::model::{init_params, BypassMode, DenseSpec, ModelConfig, Variant};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn window(steps: usize, inputs: usize, outputs: usize, seed: u64) -> (Tensor, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let x = Tensor::from_vec(&[steps, inputs], draw(steps * inputs)).unwrap();
        let y = Tensor::from_vec(&[steps, outputs], draw(steps * outputs)).unwrap();
        (x, y)
    }

    #[test]
    fn small_models_pass() {
        for (v, seed) in [(Variant::Reference, 1), (Variant::BypassBefore, 2), (Variant::TwoLstm, 3), (Variant::LinearActivation, 4)] {
            let mut config = v.config(4).scaled(4);
            config.input_size = 6;
            let params = init_params(&config, seed).unwrap();
            let (x, y) = window(6, 6, 4, seed + 10);
            let report = gradient_check(&params, &x, &y, 1e-5).unwrap();
            assert!(report.max_relative_error < 1e-4, "{v:?}: {report:?}");
            assert_eq!(report.coordinates, params.parameter_count());
        }
    }

    #[test]
    fn corrupted_coordinate_is_detected() {
        let config = Variant::Reference.config(4).scaled(4);
        let config = ModelConfig { input_size: 6, ..config };
        let params = init_params(&config, 5).unwrap();
        let (x, y) = window(6, 6, 4, 6);
        let (mut grads, _) = model_backward(&params, &x, &y).unwrap();
        let w = grads.lstm[0].weight_mut(crate::neural::lstm::Gate::Input);
        let k = (0..w.len()).max_by(|&a, &b| w.data()[a].abs().total_cmp(&w.data()[b].abs())).unwrap();
        w.data_mut()[k] *= 2.0;
        let report = compare_gradient(&params, &x, &y, &grads, 1e-5);
        assert!(report.max_relative_error > 1e-2);
        assert_eq!(report.worst, Some(("lstm0.input.w".to_string(), k)));
    }

    #[test]
    fn zero_model_zero_target() {
        let config = ModelConfig {
            input_size: 3,
            lstm_layers: vec![2],
            dense_layers: vec![DenseSpec { size: 2, activation: Activation::Tanh }],
            bypass_mode: BypassMode::ToOutput,
            bypass_width: 2,
            output_size: 2,
            use_type: false,
            use_ff: true,
        };
        let params = ModelParams::zeros(&config).unwrap();
        let (x, _) = window(4, 3, 2, 7);
        let report = gradient_check(&params, &x, &Tensor::zeros(&[4, 2]), 1e-5).unwrap();
        assert_eq!(report.max_relative_error, 0.0);
    }
}
