use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dense::{Activation, DenseParams};
use super::lstm::{Gate, LstmParams, LstmState, StepCache};
use super::tensor::{ShapeError, Tensor};
use crate::neighborhood::FeatureLayout;

/// Where the target-state inputs `x_t[0..bypass_width]` are re-injected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BypassMode {
    /// Concatenated to the input of the output layer.
    ToOutput,
    /// Concatenated to the input of the first dense layer (skips only the LSTMs).
    BeforeDense,
    None,
}

impl BypassMode {
    pub fn name(self) -> &'static str {
        match self {
            BypassMode::ToOutput => "to_output",
            BypassMode::BeforeDense => "before_dense",
            BypassMode::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "to_output" => Some(BypassMode::ToOutput),
            "before_dense" => Some(BypassMode::BeforeDense),
            "none" => Some(BypassMode::None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseSpec {
    pub size: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_size: usize,
    /// Hidden size of each stacked LSTM layer.
    pub lstm_layers: Vec<usize>,
    /// Time-distributed hidden layers between the LSTMs and the output layer.
    pub dense_layers: Vec<DenseSpec>,
    pub bypass_mode: BypassMode,
    pub bypass_width: usize,
    /// 2 × number of horizons. The output layer is always linear.
    pub output_size: usize,
    pub use_type: bool,
    pub use_ff: bool,
}

impl ModelConfig {
    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout { use_type: self.use_type, use_ff: self.use_ff }
    }

    /// Same topology with the LSTMs resized to `hidden` and the dense layers shrunk
    /// in proportion (256 → hidden, 128 → hidden / 2, …).
    pub fn scaled(&self, hidden: usize) -> ModelConfig {
        let reference = 256;
        ModelConfig {
            lstm_layers: self.lstm_layers.iter().map(|_| hidden).collect(),
            dense_layers: self
                .dense_layers
                .iter()
                .map(|d| DenseSpec { size: (d.size * hidden / reference).max(1), activation: d.activation })
                .collect(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        if self.input_size == 0 || self.output_size == 0 {
            return Err(ShapeError("input and output sizes must be positive".into()));
        }
        if self.lstm_layers.is_empty() || self.lstm_layers.contains(&0) {
            return Err(ShapeError("need at least one LSTM layer with positive width".into()));
        }
        if self.dense_layers.iter().any(|d| d.size == 0) {
            return Err(ShapeError("dense layers must have positive width".into()));
        }
        if self.bypass_mode != BypassMode::None && (self.bypass_width == 0 || self.bypass_width > self.input_size) {
            return Err(ShapeError(format!(
                "bypass width {} must be in 1..={}",
                self.bypass_width, self.input_size
            )));
        }
        Ok(())
    }

    fn bypass(&self) -> usize {
        if self.bypass_mode == BypassMode::None {
            0
        } else {
            self.bypass_width
        }
    }

    /// Index (among dense layers followed by the output layer) of the layer that
    /// receives the bypass.
    fn bypass_layer(&self) -> Option<usize> {
        match self.bypass_mode {
            BypassMode::None => None,
            BypassMode::BeforeDense => Some(0),
            BypassMode::ToOutput => Some(self.dense_layers.len()),
        }
    }

    /// (input, output, activation) of every time-distributed layer, output layer last.
    fn distributed_shapes(&self) -> Vec<(usize, usize, Activation)> {
        let mut shapes = Vec::new();
        let mut width = *self.lstm_layers.last().expect("validated");
        let bypass_at = self.bypass_layer();
        let specs = self
            .dense_layers
            .iter()
            .copied()
            .chain(std::iter::once(DenseSpec { size: self.output_size, activation: Activation::Linear }));
        for (j, spec) in specs.enumerate() {
            let input = width + if bypass_at == Some(j) { self.bypass() } else { 0 };
            shapes.push((input, spec.size, spec.activation));
            width = spec.size;
        }
        shapes
    }
}

/// The architecture variants compared in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Reference,
    Type,
    NoFf,
    NoBypass,
    BypassBefore,
    LinearActivation,
    TwoLstm,
    ThreeDense,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Reference,
        Variant::Type,
        Variant::NoFf,
        Variant::NoBypass,
        Variant::BypassBefore,
        Variant::LinearActivation,
        Variant::TwoLstm,
        Variant::ThreeDense,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Reference => "reference",
            Variant::Type => "type",
            Variant::NoFf => "no-ff",
            Variant::NoBypass => "no-bypass",
            Variant::BypassBefore => "bypass-before",
            Variant::LinearActivation => "linear-activation",
            Variant::TwoLstm => "two-lstm",
            Variant::ThreeDense => "three-dense",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }

    pub fn layout(self) -> FeatureLayout {
        FeatureLayout { use_type: self == Variant::Type, use_ff: self != Variant::NoFf }
    }

    /// Full-size configuration: LSTM 256, dense 256/128 (tanh), bypass of the four
    /// target-state inputs into the output layer, plus this variant's change.
    pub fn config(self, output_size: usize) -> ModelConfig {
        let layout = self.layout();
        let tanh = |size| DenseSpec { size, activation: Activation::Tanh };
        let mut config = ModelConfig {
            input_size: layout.width(),
            lstm_layers: vec![256],
            dense_layers: vec![tanh(256), tanh(128)],
            bypass_mode: BypassMode::ToOutput,
            bypass_width: 4,
            output_size,
            use_type: layout.use_type,
            use_ff: layout.use_ff,
        };
        match self {
            Variant::Reference | Variant::Type | Variant::NoFf => {}
            Variant::NoBypass => config.bypass_mode = BypassMode::None,
            Variant::BypassBefore => config.bypass_mode = BypassMode::BeforeDense,
            Variant::LinearActivation => config.dense_layers[1].activation = Activation::Linear,
            Variant::TwoLstm => config.lstm_layers.push(256),
            Variant::ThreeDense => config.dense_layers.push(tanh(64)),
        }
        config
    }
}

/// All learnable weights of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub lstm: Vec<LstmParams>,
    pub dense: Vec<DenseParams>,
    pub output: DenseParams,
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Result<Self, ShapeError> {
        config.validate()?;
        let mut lstm = Vec::new();
        let mut input = config.input_size;
        for &hidden in &config.lstm_layers {
            lstm.push(LstmParams::zeros(input, hidden));
            input = hidden;
        }
        let mut layers: Vec<DenseParams> =
            config.distributed_shapes().into_iter().map(|(i, o, a)| DenseParams::zeros(i, o, a)).collect();
        let output = layers.pop().expect("output layer");
        Ok(ModelParams { config: config.clone(), lstm, dense: layers, output })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(&self.config).expect("config already validated")
    }

    /// Named parameter blocks in a fixed order.
    pub fn blocks(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (l, layer) in self.lstm.iter().enumerate() {
            for gate in Gate::ALL {
                out.push((format!("lstm{l}.{}.w", gate.name()), layer.weight(gate)));
                out.push((format!("lstm{l}.{}.b", gate.name()), layer.bias(gate)));
            }
        }
        for (j, layer) in self.dense.iter().enumerate() {
            out.push((format!("dense{j}.w"), &layer.weights));
            out.push((format!("dense{j}.b"), &layer.bias));
        }
        out.push(("output.w".to_string(), &self.output.weights));
        out.push(("output.b".to_string(), &self.output.bias));
        out
    }

    /// Mutable blocks, same order as [`ModelParams::blocks`].
    pub fn blocks_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.lstm {
            for (w, b) in layer.weights.iter_mut().zip(layer.biases.iter_mut()) {
                out.push(w);
                out.push(b);
            }
        }
        for layer in &mut self.dense {
            out.push(&mut layer.weights);
            out.push(&mut layer.bias);
        }
        out.push(&mut self.output.weights);
        out.push(&mut self.output.bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += other · scale`, block by block.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for (dst, (_, src)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (a, b) in dst.data_mut().iter_mut().zip(src.data()) {
                *a += b * scale;
            }
        }
    }

    pub fn initial_states(&self) -> Vec<LstmState> {
        self.lstm.iter().map(|l| LstmState::zeros(l.hidden_size)).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.blocks().iter().all(|(_, t)| t.data().iter().all(|v| v.is_finite()))
    }
}

/// Glorot-uniform weights (±√(6 / (fan_in + fan_out))), zero biases except the
/// LSTM forget-gate bias, which starts at 1.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams, ShapeError> {
    let mut params = ModelParams::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut glorot = |t: &mut Tensor| {
        let limit = (6.0 / (t.cols() + t.rows()) as f64).sqrt();
        t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-limit..limit));
    };
    for layer in &mut params.lstm {
        for w in layer.weights.iter_mut() {
            glorot(w);
        }
        layer.bias_mut(Gate::Forget).fill(1.0);
    }
    for layer in &mut params.dense {
        glorot(&mut layer.weights);
    }
    glorot(&mut params.output.weights);
    Ok(params)
}

/// Intermediate values of a forward pass.
#[derive(Default)]
pub(crate) struct Trace {
    lstm: Vec<Vec<StepCache>>,
    /// Per time-distributed layer (output layer last): inputs and outputs per step.
    distributed: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
}

fn check_sequence(params: &ModelParams, sequence: &Tensor, initial: &[LstmState]) -> Result<(), ShapeError> {
    if sequence.shape().len() != 2 || sequence.cols() != params.config.input_size {
        return Err(ShapeError(format!(
            "sequence of shape {:?} does not match input size {}",
            sequence.shape(),
            params.config.input_size
        )));
    }
    if initial.len() != params.lstm.len()
        || initial
            .iter()
            .zip(&params.lstm)
            .any(|(s, l)| s.h.len() != l.hidden_size || s.m.len() != l.hidden_size)
    {
        return Err(ShapeError("initial states do not match the LSTM layers".into()));
    }
    Ok(())
}

pub(crate) fn forward_impl(
    params: &ModelParams,
    sequence: &Tensor,
    initial: &[LstmState],
    mut trace: Option<&mut Trace>,
) -> (Tensor, Vec<LstmState>) {
    let steps = sequence.rows();
    let mut current: Vec<Vec<f64>> = (0..steps).map(|t| sequence.row(t).to_vec()).collect();
    let mut finals = Vec::with_capacity(params.lstm.len());
    for (layer, init) in params.lstm.iter().zip(initial) {
        let mut caches = trace.as_ref().map(|_| Vec::with_capacity(steps));
        let (outputs, last) = layer.forward_sequence(&current, init, caches.as_mut());
        if let (Some(tr), Some(c)) = (trace.as_deref_mut(), caches) {
            tr.lstm.push(c);
        }
        finals.push(last);
        current = outputs;
    }
    let bypass_at = params.config.bypass_layer();
    let width = params.config.bypass_width;
    let layers = params.dense.iter().chain(std::iter::once(&params.output));
    for (j, layer) in layers.enumerate() {
        if bypass_at == Some(j) {
            for (t, row) in current.iter_mut().enumerate() {
                row.extend_from_slice(&sequence.row(t)[..width]);
            }
        }
        let outputs: Vec<Vec<f64>> = current.iter().map(|x| layer.forward(x)).collect();
        if let Some(tr) = trace.as_deref_mut() {
            tr.distributed.push((current, outputs.clone()));
        }
        current = outputs;
    }
    let out_size = params.config.output_size;
    let data: Vec<f64> = current.into_iter().flatten().collect();
    (Tensor::from_vec(&[steps, out_size], data).expect("rows of output_size"), finals)
}

/// Runs the network over a `T × N` sequence starting from `initial` (one state per
/// LSTM layer). Returns the `T × output_size` outputs and the final states.
pub fn model_forward(
    params: &ModelParams,
    sequence: &Tensor,
    initial: &[LstmState],
) -> Result<(Tensor, Vec<LstmState>), ShapeError> {
    check_sequence(params, sequence, initial)?;
    Ok(forward_impl(params, sequence, initial, None))
}

/// Mean squared error over all outputs and steps.
pub fn mse(output: &Tensor, target: &Tensor) -> f64 {
    let n = output.len().max(1) as f64;
    output.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n
}

/// Loss value and exact gradients (backpropagation through time) of the mean squared
/// error between the network outputs and `target`, starting from zero state.
pub fn model_backward(params: &ModelParams, sequence: &Tensor, target: &Tensor) -> Result<(ModelParams, f64), ShapeError> {
    let initial = params.initial_states();
    check_sequence(params, sequence, &initial)?;
    if target.shape() != [sequence.rows(), params.config.output_size] {
        return Err(ShapeError(format!(
            "target shape {:?}, expected [{}, {}]",
            target.shape(),
            sequence.rows(),
            params.config.output_size
        )));
    }
    let mut trace = Trace::default();
    let (output, _) = forward_impl(params, sequence, &initial, Some(&mut trace));
    let loss = mse(&output, target);
    let mut grads = params.zeros_like();
    let scale = 2.0 / output.len().max(1) as f64;
    let steps = sequence.rows();
    let mut d: Vec<Vec<f64>> = (0..steps)
        .map(|t| output.row(t).iter().zip(target.row(t)).map(|(y, g)| scale * (y - g)).collect())
        .collect();

    let bypass_at = params.config.bypass_layer();
    let width = params.config.bypass_width;
    let n_dense = params.dense.len();
    for j in (0..=n_dense).rev() {
        let (layer, grad) = if j == n_dense {
            (&params.output, &mut grads.output)
        } else {
            (&params.dense[j], &mut grads.dense[j])
        };
        let (inputs, outputs) = &trace.distributed[j];
        d = (0..steps)
            .map(|t| {
                let mut dx = layer.backward(&inputs[t], &outputs[t], &d[t], grad);
                if bypass_at == Some(j) {
                    dx.truncate(dx.len() - width);
                }
                dx
            })
            .collect();
    }
    for l in (0..params.lstm.len()).rev() {
        d = params.lstm[l].backward_sequence(&trace.lstm[l], &d, &mut grads.lstm[l]);
    }
    Ok((grads, loss))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(bypass: BypassMode) -> ModelConfig {
        ModelConfig {
            input_size: 6,
            lstm_layers: vec![4],
            dense_layers: vec![
                DenseSpec { size: 5, activation: Activation::Tanh },
                DenseSpec { size: 3, activation: Activation::Tanh },
            ],
            bypass_mode: bypass,
            bypass_width: 4,
            output_size: 4,
            use_type: false,
            use_ff: true,
        }
    }

    fn random_sequence(steps: usize, width: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(&[steps, width], (0..steps * width).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn variant_table() {
        let configs: Vec<ModelConfig> = Variant::ALL.iter().map(|v| v.config(20)).collect();
        assert_eq!(configs.len(), 8);
        for (i, a) in configs.iter().enumerate() {
            for b in &configs[i + 1..] {
                assert_ne!(a, b);
            }
        }
        assert_eq!(Variant::Reference.config(20).input_size, 49);
        assert_eq!(Variant::Type.config(20).input_size, 59);
        assert_eq!(Variant::NoFf.config(20).input_size, 44);
        assert_eq!(Variant::ThreeDense.config(20).dense_layers.len(), 3);
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()), Some(v));
        }
        let scaled = Variant::Reference.config(20).scaled(32);
        assert_eq!(scaled.lstm_layers, vec![32]);
        assert_eq!(scaled.dense_layers.iter().map(|d| d.size).collect::<Vec<_>>(), vec![32, 16]);
    }

    #[test]
    fn shape_chain() {
        let p = ModelParams::zeros(&Variant::Reference.config(20)).unwrap();
        assert_eq!(p.lstm[0].weight(Gate::Forget).shape(), &[256, 49 + 256]);
        assert_eq!(p.dense[0].weights.shape(), &[256, 256]);
        assert_eq!(p.dense[1].weights.shape(), &[128, 256]);
        assert_eq!(p.output.weights.shape(), &[20, 132]);
        let p = ModelParams::zeros(&Variant::BypassBefore.config(20)).unwrap();
        assert_eq!(p.dense[0].weights.shape(), &[256, 260]);
        assert_eq!(p.output.weights.shape(), &[20, 128]);
        let p = ModelParams::zeros(&Variant::TwoLstm.config(20)).unwrap();
        assert_eq!(p.lstm[1].weight(Gate::Output).shape(), &[256, 512]);
        let mut bad = small_config(BypassMode::ToOutput);
        bad.bypass_width = 7;
        assert!(ModelParams::zeros(&bad).is_err());
    }

    #[test]
    fn every_variant_runs() {
        for v in Variant::ALL {
            let config = v.config(6).scaled(8);
            let params = init_params(&config, 1).unwrap();
            let seq = random_sequence(7, config.input_size, 2);
            let (a, _) = model_forward(&params, &seq, &params.initial_states()).unwrap();
            let (b, _) = model_forward(&params, &seq, &params.initial_states()).unwrap();
            assert_eq!(a.shape(), &[7, 6]);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_model_outputs_zero() {
        let params = ModelParams::zeros(&small_config(BypassMode::ToOutput)).unwrap();
        let seq = random_sequence(5, 6, 3);
        let (out, _) = model_forward(&params, &seq, &params.initial_states()).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bypass_identity_wiring() {
        let mut params = ModelParams::zeros(&small_config(BypassMode::ToOutput)).unwrap();
        // output input = [dense(3), bypass(4)]
        for k in 0..4 {
            params.output.weights.row_mut(k)[3 + k] = 1.0;
        }
        let seq = random_sequence(5, 6, 4);
        let (out, _) = model_forward(&params, &seq, &params.initial_states()).unwrap();
        for t in 0..5 {
            assert_eq!(out.row(t), &seq.row(t)[..4]);
        }
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let params = ModelParams::zeros(&small_config(BypassMode::ToOutput)).unwrap();
        let seq = random_sequence(5, 5, 4);
        assert!(model_forward(&params, &seq, &params.initial_states()).is_err());
        let target = Tensor::zeros(&[4, 4]);
        assert!(model_backward(&params, &random_sequence(5, 6, 4), &target).is_err());
    }

    /// Straightforward per-scalar re-implementation of the whole network.
    fn scalar_oracle(p: &ModelParams, seq: &Tensor) -> Vec<Vec<f64>> {
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let lstm = &p.lstm[0];
        let hdim = lstm.hidden_size;
        let mut h = vec![0.0; hdim];
        let mut m = vec![0.0; hdim];
        let mut outs = Vec::new();
        for t in 0..seq.rows() {
            let x = seq.row(t);
            let mut z: Vec<f64> = x.to_vec();
            z.extend(&h);
            let gate = |g: Gate, k: usize| -> f64 {
                let w = lstm.weight(g);
                let mut s = lstm.bias(g).data()[k];
                for (j, zj) in z.iter().enumerate() {
                    s += w.data()[k * z.len() + j] * zj;
                }
                s
            };
            let mut new_h = vec![0.0; hdim];
            for k in 0..hdim {
                let f = sig(gate(Gate::Forget, k));
                let i = sig(gate(Gate::Input, k));
                let c = gate(Gate::Candidate, k).tanh();
                let o = sig(gate(Gate::Output, k));
                m[k] = f * m[k] + i * c;
                new_h[k] = o * m[k].tanh();
            }
            h = new_h;
            let mut a = h.clone();
            for layer in &p.dense {
                let mut next = Vec::new();
                for r in 0..layer.output_size() {
                    let mut s = layer.bias.data()[r];
                    for (j, aj) in a.iter().enumerate() {
                        s += layer.weights.row(r)[j] * aj;
                    }
                    next.push(if layer.activation == Activation::Tanh { s.tanh() } else { s });
                }
                a = next;
            }
            a.extend(&x[..4]);
            let mut y = Vec::new();
            for r in 0..p.output.output_size() {
                let mut s = p.output.bias.data()[r];
                for (j, aj) in a.iter().enumerate() {
                    s += p.output.weights.row(r)[j] * aj;
                }
                y.push(s);
            }
            outs.push(y);
        }
        outs
    }

    #[test]
    fn matches_scalar_oracle() {
        let params = init_params(&small_config(BypassMode::ToOutput), 9).unwrap();
        let seq = random_sequence(5, 6, 10);
        let (out, _) = model_forward(&params, &seq, &params.initial_states()).unwrap();
        let oracle = scalar_oracle(&params, &seq);
        for t in 0..5 {
            for k in 0..4 {
                assert!((out.row(t)[k] - oracle[t][k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn perfect_target_has_zero_gradient() {
        let params = init_params(&small_config(BypassMode::ToOutput), 5).unwrap();
        let seq = random_sequence(6, 6, 6);
        let (out, _) = model_forward(&params, &seq, &params.initial_states()).unwrap();
        let (grads, loss) = model_backward(&params, &seq, &out).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.blocks().iter().all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn linear_output_layer_gradient_is_least_squares_gradient() {
        // With zero LSTM and dense weights the output layer sees [tanh(0.5·1)…, x[0..4]]:
        // the model is linear regression on a fixed design matrix.
        let mut params = ModelParams::zeros(&small_config(BypassMode::ToOutput)).unwrap();
        params.dense[1].bias.fill(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        params.output.weights.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        params.output.bias.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let seq = random_sequence(8, 6, 13);
        let target = random_sequence(8, 4, 14);
        let (grads, _) = model_backward(&params, &seq, &target).unwrap();
        // design rows a_t = [tanh(0.5) ×3, x_t[0..4]]; residual r = W a + b − y; dL/dW = 2/(T·O) Σ r aᵀ
        let n = (8 * 4) as f64;
        for r in 0..4 {
            let mut gw = [0.0; 7];
            let mut gb = 0.0;
            for t in 0..8 {
                let mut a = vec![0.5f64.tanh(); 3];
                a.extend(&seq.row(t)[..4]);
                let pred: f64 = params.output.bias.data()[r]
                    + a.iter().zip(params.output.weights.row(r)).map(|(x, w)| x * w).sum::<f64>();
                let res = pred - target.row(t)[r];
                for j in 0..7 {
                    gw[j] += 2.0 * res * a[j] / n;
                }
                gb += 2.0 * res / n;
            }
            for j in 0..7 {
                assert!((grads.output.weights.row(r)[j] - gw[j]).abs() < 1e-12);
            }
            assert!((grads.output.bias.data()[r] - gb).abs() < 1e-12);
        }
    }

    #[test]
    fn init_is_deterministic_with_unit_forget_bias() {
        let config = Variant::Reference.config(20).scaled(16);
        let a = init_params(&config, 77).unwrap();
        let b = init_params(&config, 77).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(&config, 78).unwrap());
        assert!(a.lstm[0].bias(Gate::Forget).data().iter().all(|&v| v == 1.0));
        assert!(a.lstm[0].bias(Gate::Input).data().iter().all(|&v| v == 0.0));
        assert!(a.output.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_weight_distribution() {
        let config = Variant::Reference.config(20);
        let p = init_params(&config, 3).unwrap();
        let w = p.lstm[0].weight(Gate::Input);
        let limit = (6.0 / (305.0 + 256.0f64)).sqrt();
        assert!(w.len() >= 10_000);
        assert!(w.data().iter().all(|v| v.abs() <= limit));
        let n = w.len() as f64;
        let mean = w.data().iter().sum::<f64>() / n;
        // uniform(−a, a) has standard deviation a/√3
        let standard_error = limit / 3f64.sqrt() / n.sqrt();
        assert!(mean.abs() < 3.0 * standard_error, "mean {mean}, se {standard_error}");
        let var = w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((var - limit * limit / 3.0).abs() < 0.05 * limit * limit / 3.0);
    }
}
