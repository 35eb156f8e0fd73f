use super::tensor::{add_outer, add_transposed, affine, ShapeError, Tensor};

/// Gate order used for parameter storage and naming.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Forget,
    Input,
    Candidate,
    Output,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Candidate, Gate::Output];

    pub fn name(self) -> &'static str {
        match self {
            Gate::Forget => "forget",
            Gate::Input => "input",
            Gate::Candidate => "candidate",
            Gate::Output => "output",
        }
    }
}

/// One LSTM layer. Every gate has a `hidden × (input + hidden)` weight acting on
/// the concatenation `[x_t, h_{t−1}]` and a bias of length `hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input_size: usize,
    pub hidden_size: usize,
    pub weights: [Tensor; 4],
    pub biases: [Tensor; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    /// Cell output h_t.
    pub h: Vec<f64>,
    /// Internal memory m_t.
    pub m: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState { h: vec![0.0; hidden], m: vec![0.0; hidden] }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Values kept from the forward step for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    z: Vec<f64>,
    f: Vec<f64>,
    i: Vec<f64>,
    c: Vec<f64>,
    o: Vec<f64>,
    m_prev: Vec<f64>,
    tanh_m: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let w = || Tensor::zeros(&[hidden_size, input_size + hidden_size]);
        let b = || Tensor::zeros(&[hidden_size]);
        LstmParams { input_size, hidden_size, weights: [w(), w(), w(), w()], biases: [b(), b(), b(), b()] }
    }

    pub fn weight(&self, gate: Gate) -> &Tensor {
        &self.weights[gate as usize]
    }

    pub fn bias(&self, gate: Gate) -> &Tensor {
        &self.biases[gate as usize]
    }

    pub fn weight_mut(&mut self, gate: Gate) -> &mut Tensor {
        &mut self.weights[gate as usize]
    }

    pub fn bias_mut(&mut self, gate: Gate) -> &mut Tensor {
        &mut self.biases[gate as usize]
    }

    fn check(&self, x: &[f64], prev: &LstmState) -> Result<(), ShapeError> {
        if x.len() != self.input_size || prev.h.len() != self.hidden_size || prev.m.len() != self.hidden_size {
            return Err(ShapeError(format!(
                "lstm step expects input {} and state {}, got input {} and state {}/{}",
                self.input_size,
                self.hidden_size,
                x.len(),
                prev.h.len(),
                prev.m.len()
            )));
        }
        Ok(())
    }

    /// One step that also returns the intermediate values.
    pub(crate) fn step_cached(&self, x: &[f64], prev: &LstmState) -> (LstmState, StepCache) {
        let hidden = self.hidden_size;
        let mut z = Vec::with_capacity(self.input_size + hidden);
        z.extend_from_slice(x);
        z.extend_from_slice(&prev.h);
        let mut pre = [vec![0.0; hidden], vec![0.0; hidden], vec![0.0; hidden], vec![0.0; hidden]];
        for (g, out) in pre.iter_mut().enumerate() {
            affine(&self.weights[g], self.biases[g].data(), &z, out);
        }
        let [mut f, mut i, mut c, mut o] = pre;
        f.iter_mut().for_each(|v| *v = sigmoid(*v));
        i.iter_mut().for_each(|v| *v = sigmoid(*v));
        c.iter_mut().for_each(|v| *v = v.tanh());
        o.iter_mut().for_each(|v| *v = sigmoid(*v));
        let m: Vec<f64> = (0..hidden).map(|k| f[k] * prev.m[k] + i[k] * c[k]).collect();
        let tanh_m: Vec<f64> = m.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = o.iter().zip(&tanh_m).map(|(o, t)| o * t).collect();
        let cache = StepCache { z, f, i, c, o, m_prev: prev.m.clone(), tanh_m };
        (LstmState { h, m }, cache)
    }

    /// Runs the layer over `inputs` (one row per step), returning every h_t and the final state.
    pub(crate) fn forward_sequence(
        &self,
        inputs: &[Vec<f64>],
        initial: &LstmState,
        mut caches: Option<&mut Vec<StepCache>>,
    ) -> (Vec<Vec<f64>>, LstmState) {
        let mut state = initial.clone();
        let mut outputs = Vec::with_capacity(inputs.len());
        for x in inputs {
            let (next, cache) = self.step_cached(x, &state);
            if let Some(c) = caches.as_deref_mut() {
                c.push(cache);
            }
            outputs.push(next.h.clone());
            state = next;
        }
        (outputs, state)
    }

    /// Backpropagation through time for one layer.
    ///
    /// `d_outputs[t]` is the loss gradient reaching h_t from above. Gradients are
    /// accumulated into `grads`; the gradient with respect to each input row is returned.
    pub(crate) fn backward_sequence(&self, caches: &[StepCache], d_outputs: &[Vec<f64>], grads: &mut LstmParams) -> Vec<Vec<f64>> {
        let hidden = self.hidden_size;
        let n_in = self.input_size;
        let mut dh_next = vec![0.0; hidden];
        let mut dm_next = vec![0.0; hidden];
        let mut d_inputs = vec![Vec::new(); caches.len()];
        let mut da = [vec![0.0; hidden], vec![0.0; hidden], vec![0.0; hidden], vec![0.0; hidden]];
        for t in (0..caches.len()).rev() {
            let c = &caches[t];
            for k in 0..hidden {
                let dh = d_outputs[t][k] + dh_next[k];
                let d_o = dh * c.tanh_m[k];
                let dm = dh * c.o[k] * (1.0 - c.tanh_m[k] * c.tanh_m[k]) + dm_next[k];
                let df = dm * c.m_prev[k];
                let di = dm * c.c[k];
                let dc = dm * c.i[k];
                dm_next[k] = dm * c.f[k];
                da[Gate::Forget as usize][k] = df * c.f[k] * (1.0 - c.f[k]);
                da[Gate::Input as usize][k] = di * c.i[k] * (1.0 - c.i[k]);
                da[Gate::Candidate as usize][k] = dc * (1.0 - c.c[k] * c.c[k]);
                da[Gate::Output as usize][k] = d_o * c.o[k] * (1.0 - c.o[k]);
            }
            let mut dz = vec![0.0; n_in + hidden];
            for g in 0..4 {
                add_outer(&mut grads.weights[g], &da[g], &c.z);
                for (b, d) in grads.biases[g].data_mut().iter_mut().zip(&da[g]) {
                    *b += d;
                }
                add_transposed(&self.weights[g], &da[g], &mut dz);
            }
            dh_next.copy_from_slice(&dz[n_in..]);
            dz.truncate(n_in);
            d_inputs[t] = dz;
        }
        d_inputs
    }
}

/// One LSTM step: with z = [x_t, h_{t−1}],
/// f = σ(W_f z + b_f), i = σ(W_i z + b_i), c̃ = tanh(W_c z + b_c), o = σ(W_o z + b_o),
/// m_t = f ⊙ m_{t−1} + i ⊙ c̃ and h_t = o ⊙ tanh(m_t).
pub fn lstm_step(params: &LstmParams, x: &[f64], prev: &LstmState) -> Result<LstmState, ShapeError> {
    params.check(x, prev)?;
    Ok(params.step_cached(x, prev).0)
}
