use serde::{Deserialize, Serialize};

use super::{Result, TrainError};
use crate::model::ParamStore;
use crate::tensor::{Element, Gradients};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

/// First and second moments per parameter, plus the step counter used for
/// bias correction.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

/// Gradients aligned with a parameter store; missing entries are zeros.
pub fn collect_gradients<T: Element>(params: &ParamStore<T>, grads: &Gradients<T>) -> Vec<Vec<f64>> {
    params
        .iter()
        .map(|p| match grads.get(&p.tensor) {
            Some(g) => g.iter().map(|v| v.as_f64()).collect(),
            None => vec![0.0; p.tensor.numel()],
        })
        .collect()
}

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}

/// One bias-corrected Adam update. If any gradient is non-finite nothing is
/// changed and the offending parameter is named in the error.
pub fn adam_step<T: Element>(
    params: &mut ParamStore<T>,
    grads: &[Vec<f64>],
    state: &mut AdamState,
    hyper: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() {
        return Err(TrainError::Shape(format!("{} gradients for {} parameters", grads.len(), params.len())));
    }
    for (p, g) in params.iter().zip(grads) {
        if g.len() != p.tensor.numel() {
            return Err(TrainError::Shape(format!("gradient of {} has {} values", p.name, g.len())));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteGradient(p.name.clone()));
        }
    }
    if state.m.is_empty() {
        state.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        state.v = state.m.clone();
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v, g) = (&mut state.m[i], &mut state.v[i], &grads[i]);
        for (j, w) in p.tensor.data_mut().iter_mut().enumerate() {
            m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g[j];
            v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g[j] * g[j];
            let update = hyper.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + hyper.eps);
            *w = T::of(w.as_f64() - update);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamRole;

    fn store(values: &[f64]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("w", ParamRole::Weight, &[values.len()]);
        s.iter_mut().next().unwrap().tensor.data_mut().copy_from_slice(values);
        s
    }

    #[test]
    fn zero_gradients_leave_parameters() {
        let mut p = store(&[1.0, -2.0]);
        let mut st = AdamState::default();
        adam_step(&mut p, &[vec![0.0, 0.0]], &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p.get(0).data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = store(&[0.5]);
        let mut st = AdamState::default();
        let hyper = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        adam_step(&mut p, &[vec![1.0]], &mut st, &hyper).unwrap();
        assert!((p.get(0).data()[0] - (0.5 - 0.01)).abs() < 1e-9);
    }

    #[test]
    fn nan_gradient_aborts_without_update() {
        let mut p = store(&[0.5]);
        let mut st = AdamState::default();
        let err = adam_step(&mut p, &[vec![f64::NAN]], &mut st, &AdamConfig::default()).unwrap_err();
        assert_eq!(err, TrainError::NonFiniteGradient("w".into()));
        assert_eq!(p.get(0).data(), &[0.5]);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut g = vec![vec![3.0], vec![4.0]];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0][0] - 0.6).abs() < 1e-12 && (g[1][0] - 0.8).abs() < 1e-12);
    }
}
