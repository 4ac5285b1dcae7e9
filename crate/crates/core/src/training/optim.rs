use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ParamGroup, ParamStore};

/// Adam moments per parameter. Parameters that never received a gradient
/// are skipped entirely, including weight decay, and keep their own step
/// counts for bias correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    param_steps: Vec<u64>,
    groups: Vec<bool>,
}

impl OptimizerState {
    pub fn new(store: &ParamStore) -> Self {
        Self {
            step: 0,
            first: store.iter().map(|p| vec![0.0; p.tensor.len()]).collect(),
            second: store.iter().map(|p| vec![0.0; p.tensor.len()]).collect(),
            param_steps: vec![0; store.len()],
            groups: store.iter().map(|p| p.group == ParamGroup::Encoder).collect(),
        }
    }

    pub fn param_steps(&self, i: usize) -> u64 {
        self.param_steps[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr_encoder: f64,
    pub lr_rest: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// Adam with bias correction, then decoupled decay `p ← p − lr·wd·p`.
/// Gradients are zeroed afterwards.
pub fn optimizer_step(store: &mut ParamStore, state: &mut OptimizerState, cfg: &AdamConfig) -> Result<()> {
    if let Some(p) = store
        .iter()
        .filter(|p| p.touched)
        .find(|p| p.tensor.grad().is_some_and(|g| g.iter().any(|v| !v.is_finite())))
    {
        return Err(Error::Numeric(format!("non-finite gradient in {}", p.name)));
    }
    for (i, p) in store.iter_mut().enumerate() {
        if !p.touched {
            continue;
        }
        state.param_steps[i] += 1;
        let t = state.param_steps[i] as i32;
        let lr = if state.groups[i] { cfg.lr_encoder } else { cfg.lr_rest };
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let (m, v) = (&mut state.first[i], &mut state.second[i]);
        let grad = p.tensor.grad().expect("tracked parameter").to_vec();
        for (j, w) in p.tensor.data_mut().iter_mut().enumerate() {
            let g = grad[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            let update = (m[j] / c1) / ((v[j] / c2).sqrt() + cfg.epsilon);
            *w -= lr * update;
            *w -= lr * cfg.weight_decay * *w;
        }
    }
    state.step += 1;
    store.zero_grad();
    Ok(())
}

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the applied factor.
pub fn clip_gradients(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if !(norm > max_norm) {
        return 1.0;
    }
    let scale = max_norm / norm;
    for p in store.iter_mut() {
        if let Some(g) = p.tensor.grad_mut() {
            g.iter_mut().for_each(|v| *v *= scale);
        }
    }
    scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HierModel, ModelConfig};

    fn adam(wd: f64) -> AdamConfig {
        AdamConfig {
            lr_encoder: 2e-5,
            lr_rest: 1e-3,
            weight_decay: wd,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    fn store() -> ParamStore {
        HierModel::new(ModelConfig::tiny(), 0).unwrap().params().clone()
    }

    fn index(s: &ParamStore, name: &str) -> usize {
        s.index_of(name).unwrap()
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = store();
        let i = index(&s, "token_head.output.bias");
        let before = s.by_index(i).tensor.data()[0];
        let mut grad = vec![0.0; s.by_index(i).tensor.len()];
        grad[0] = 0.37;
        s.accumulate(i, &grad, 1.0).unwrap();
        let mut st = OptimizerState::new(&s);
        optimizer_step(&mut s, &mut st, &adam(0.0)).unwrap();
        let delta = s.by_index(i).tensor.data()[0] - before;
        let expected = -1e-3 * 0.37 / (0.37 + 1e-8);
        assert!((delta - expected).abs() < 1e-15);
        assert_eq!(st.step, 1);
        assert!(s.by_index(i).tensor.grad().unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn zero_gradient_with_and_without_decay() {
        for wd in [0.0, 0.01] {
            let mut s = store();
            let i = index(&s, "encoder.layer0.ff.in.weight");
            let before = s.by_index(i).tensor.data().to_vec();
            let zeros = vec![0.0; before.len()];
            s.accumulate(i, &zeros, 1.0).unwrap();
            let mut st = OptimizerState::new(&s);
            optimizer_step(&mut s, &mut st, &adam(wd)).unwrap();
            for (a, b) in s.by_index(i).tensor.data().iter().zip(&before) {
                assert_eq!(*a, b - 2e-5 * wd * b);
            }
        }
    }

    #[test]
    fn untouched_parameters_are_left_alone() {
        let mut s = store();
        let before = s.clone();
        let mut st = OptimizerState::new(&s);
        optimizer_step(&mut s, &mut st, &adam(0.01)).unwrap();
        for (a, b) in s.iter().zip(before.iter()) {
            assert_eq!(a.tensor.data(), b.tensor.data());
        }
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut s = store();
        let i = index(&s, "document_head.hidden.bias");
        let mut g = vec![0.0; s.by_index(i).tensor.len()];
        g[1] = f64::NAN;
        s.accumulate(i, &g, 1.0).unwrap();
        let mut st = OptimizerState::new(&s);
        match optimizer_step(&mut s, &mut st, &adam(0.0)) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("document_head.hidden.bias")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn clipping_cases() {
        let mut s = store();
        let a = index(&s, "document_head.output.bias");
        let b = index(&s, "sentence_head.output.bias");
        s.accumulate(a, &[3.0], 1.0).unwrap();
        s.accumulate(b, &[4.0], 1.0).unwrap();
        assert!((clip_gradients(&mut s, 1.0) - 0.2).abs() < 1e-15);
        assert!((s.grad_norm() - 1.0).abs() < 1e-12);
        assert_eq!(clip_gradients(&mut s, 5.0), 1.0);
        s.zero_grad();
        s.accumulate(a, &[0.3], 1.0).unwrap();
        assert_eq!(clip_gradients(&mut s, 1.0), 1.0);
        s.zero_grad();
        s.accumulate(a, &[2.0], 1.0).unwrap();
        assert_eq!(clip_gradients(&mut s, 1.0), 0.5);
    }
}
