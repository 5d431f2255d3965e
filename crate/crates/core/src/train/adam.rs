//! Adam with bias correction over every trainable parameter block.

use super::grad::GradientSet;
use crate::model::TuckerModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &AdamConfig, t: i32) {
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

/// First and second moment estimates for every parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u32,
    entity: Moments,
    relation: Moments,
    core: Moments,
    bn: Vec<Moments>,
}

impl AdamState {
    pub fn new(model: &TuckerModel, config: AdamConfig) -> Self {
        let mut bn = Vec::new();
        for site in [&model.bn_input, &model.bn_hidden].into_iter().flatten() {
            bn.push(Moments::new(site.features()));
            bn.push(Moments::new(site.features()));
        }
        AdamState {
            config,
            step: 0,
            entity: Moments::new(model.entity.data().len()),
            relation: Moments::new(model.relation.data().len()),
            core: Moments::new(model.core.data().len()),
            bn,
        }
    }
}

/// Applies one Adam update to `model` using `grads`.
pub fn adam_step(model: &mut TuckerModel, grads: &GradientSet, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let cfg = state.config;
    state
        .entity
        .step(model.entity.data_mut(), grads.entity.data(), lr, &cfg, t);
    if model.trainable.relation {
        state.relation.step(
            model.relation.data_mut(),
            grads.relation.data(),
            lr,
            &cfg,
            t,
        );
    }
    if model.trainable.core {
        state
            .core
            .step(model.core.data_mut(), grads.core.data(), lr, &cfg, t);
    }
    let mut moments = state.bn.iter_mut();
    for (site, grad) in [
        (model.bn_input.as_mut(), grads.bn_input.as_ref()),
        (model.bn_hidden.as_mut(), grads.bn_hidden.as_ref()),
    ] {
        if let Some(site) = site {
            let (ms, mb) = (moments.next(), moments.next());
            if let (Some(g), Some(ms), Some(mb)) = (grad, ms, mb) {
                ms.step(&mut site.scale, &g.scale, lr, &cfg, t);
                mb.step(&mut site.shift, &g.shift, lr, &cfg, t);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_model;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut model = init_model(5, 2, 3, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let before = model.clone();
        let grads = GradientSet::zeros_like(&model);
        let mut state = AdamState::new(&model, AdamConfig::default());
        for _ in 0..3 {
            adam_step(&mut model, &grads, &mut state, 0.1);
        }
        assert_eq!(model, before);
    }

    // Hand-stepped scalar Adam, independent of the block implementation.
    fn scalar_adam(mut p: f64, grads: &[f64], lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut m, mut v) = (0.0, 0.0);
        for (t, &g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            p -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        p
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut model = init_model(2, 1, 1, 1, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let before = model.clone();
        let mut grads = GradientSet::zeros_like(&model);
        grads.entity.data_mut().fill(0.37);
        let mut state = AdamState::new(&model, AdamConfig::default());
        adam_step(&mut model, &grads, &mut state, 0.01);
        for (a, b) in model.entity.data().iter().zip(before.entity.data()) {
            let moved = b - a;
            assert!((moved - 0.01).abs() < 1e-9, "moved {moved}");
            assert!((a - scalar_adam(*b, &[0.37], 0.01)).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_scalar_oracle_over_several_steps() {
        let mut model = init_model(1, 1, 1, 1, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let start = model.core.data()[0];
        let seq = [0.5, -1.25, 0.1, 3.0, -0.02];
        let mut state = AdamState::new(&model, AdamConfig::default());
        for &g in &seq {
            let mut grads = GradientSet::zeros_like(&model);
            grads.core.data_mut()[0] = g;
            adam_step(&mut model, &grads, &mut state, 0.003);
        }
        assert!((model.core.data()[0] - scalar_adam(start, &seq, 0.003)).abs() < 1e-15);
    }

    #[test]
    fn frozen_blocks_are_not_updated() {
        let mut model = init_model(3, 2, 2, 2, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        model.trainable.core = false;
        model.trainable.relation = false;
        let mut grads = GradientSet::zeros_like(&model);
        grads.core.data_mut().fill(1.0);
        grads.relation.data_mut().fill(1.0);
        grads.entity.data_mut().fill(1.0);
        let before = model.clone();
        let mut state = AdamState::new(&model, AdamConfig::default());
        adam_step(&mut model, &grads, &mut state, 0.1);
        assert_eq!(model.core, before.core);
        assert_eq!(model.relation, before.relation);
        assert_ne!(model.entity, before.entity);
    }
}
