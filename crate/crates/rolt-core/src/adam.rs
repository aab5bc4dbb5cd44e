//! Adam optimizer over a [`ParamStore`] / [`GradBuffer`] pair.

use crate::tape::{GradBuffer, ParamStore};
use serde::{Deserialize, Serialize};

/// First/second moment estimates per parameter plus the shared step count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn zeros_like(params: &ParamStore) -> Self {
        let m: Vec<Vec<f64>> = (0..params.len())
            .map(|i| vec![0.0; params.value(i).numel()])
            .collect();
        AdamState { v: m.clone(), m, t: 0 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update. Shapes of `grads` must align with `params`.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &GradBuffer,
    state: &mut AdamState,
    cfg: &AdamConfig,
) {
    assert_eq!(
        grads.grads.len(),
        params.len(),
        "adam_step: grad count {} vs param count {}",
        grads.grads.len(),
        params.len()
    );
    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    for i in 0..params.len() {
        let g = &grads.grads[i];
        let p = params.value_mut(i);
        assert_eq!(
            g.len(),
            p.numel(),
            "adam_step: shape mismatch on param {} ({} vs {})",
            i,
            g.len(),
            p.numel()
        );
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for j in 0..g.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let mhat = m[j] / bc1;
            let vhat = v[j] / bc2;
            p.data[j] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn zero_grad_leaves_params_unchanged() {
        let mut params = ParamStore::new();
        params.add("w", Tensor::vector(vec![1.0, -2.0, 3.0]));
        let grads = GradBuffer::zeros_like(&params);
        let mut state = AdamState::zeros_like(&params);
        adam_step(&mut params, &grads, &mut state, &AdamConfig::default());
        assert_eq!(params.value(0).data, vec![1.0, -2.0, 3.0]);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr_sign() {
        let mut params = ParamStore::new();
        params.add("w", Tensor::scalar(0.5));
        let mut grads = GradBuffer::zeros_like(&params);
        grads.grads[0][0] = 0.37;
        let mut state = AdamState::zeros_like(&params);
        let cfg = AdamConfig { lr: 0.01, ..Default::default() };
        adam_step(&mut params, &grads, &mut state, &cfg);
        // bias-corrected first step: mhat = g, vhat = g², step ≈ -lr·sign(g)
        let moved = 0.5 - params.value(0).data[0];
        assert!((moved - 0.01).abs() < 1e-6, "step was {moved}");
    }

    #[test]
    fn quadratic_descent_matches_scalar_oracle() {
        // 10 steps on f(w)=w² from w0=1 at lr=0.1 against an independent
        // scalar Adam recurrence; |w| must strictly decrease.
        let cfg = AdamConfig { lr: 0.1, ..Default::default() };
        let mut params = ParamStore::new();
        params.add("w", Tensor::scalar(1.0));
        let mut state = AdamState::zeros_like(&params);

        let (mut wo, mut mo, mut vo) = (1.0f64, 0.0f64, 0.0f64);
        let mut prev = 1.0f64;
        for t in 1..=10 {
            let g = 2.0 * params.value(0).data[0];
            let mut grads = GradBuffer::zeros_like(&params);
            grads.grads[0][0] = g;
            adam_step(&mut params, &grads, &mut state, &cfg);

            let go = 2.0 * wo;
            mo = cfg.beta1 * mo + (1.0 - cfg.beta1) * go;
            vo = cfg.beta2 * vo + (1.0 - cfg.beta2) * go * go;
            let mhat = mo / (1.0 - cfg.beta1.powi(t));
            let vhat = vo / (1.0 - cfg.beta2.powi(t));
            wo -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);

            let w = params.value(0).data[0];
            assert!((w - wo).abs() < 1e-12, "step {t}: {w} vs oracle {wo}");
            assert!(w.abs() < prev.abs(), "|w| not strictly decreasing at step {t}");
            prev = w;
        }
    }
}
