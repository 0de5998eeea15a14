use serde::{Deserialize, Serialize};

use super::{ensure_same_shape, Element, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates and the step counter, one moment pair per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Element> AdamState<T> {
    pub fn zeros_like(params: &[Tensor<T>]) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step<T: Element>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::InvalidArgument(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        ensure_same_shape("adam grad", p.shape(), g.shape())?;
        ensure_same_shape("adam state", p.shape(), state.m[i].shape())?;
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::of_f64(cfg.beta1), T::of_f64(cfg.beta2));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    let corr1 = T::of_f64(1.0 - cfg.beta1.powi(t));
    let corr2 = T::of_f64(1.0 - cfg.beta2.powi(t));
    let (lr, eps) = (T::of_f64(cfg.lr), T::of_f64(cfg.eps));
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[j] = b1 * m[j] + one_b1 * gj;
            v[j] = b2 * v[j] + one_b2 * gj * gj;
            let m_hat = m[j] / corr1;
            let v_hat = v[j] / corr2;
            *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Adam optimizer bound to a fixed parameter list.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub state: AdamState<T>,
}

impl<T: Element> Adam<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Self {
        Self { config, state: AdamState::zeros_like(params) }
    }

    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        adam_step(params, grads, &mut self.state, &self.config)
    }
}
