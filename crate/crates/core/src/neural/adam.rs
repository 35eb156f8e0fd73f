use super::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first: ModelParams,
    pub second: ModelParams,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState { step: 0, first: params.zeros_like(), second: params.zeros_like() }
    }
}

/// One bias-corrected Adam step: `θ −= lr · m̂ / (√v̂ + ε)`.
pub fn adam_update(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, config: &AdamConfig) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    let blocks = params
        .blocks_mut()
        .into_iter()
        .zip(grads.blocks())
        .zip(state.first.blocks_mut().into_iter().zip(state.second.blocks_mut()));
    for ((p, (_, g)), (m, v)) in blocks {
        let iter = p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
        for ((p, &g), (m, v)) in iter {
            *m = config.beta1 * *m + (1.0 - config.beta1) * g;
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
            *p -= config.learning_rate * (*m / c1) / ((*v / c2).sqrt() + config.epsilon);
        }
    }
}
