use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::params::{Gradient, Layout, ParamVector};
use crate::error::{Error, Result};

fn check_step(params: &ParamVector, grad: &Gradient, lr: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    if **params.layout() != **grad.layout() {
        return Err(Error::dims("gradient layout", params.len(), grad.len()));
    }
    grad.check_finite()
}

/// `params - lr * grad`.
pub fn sgd_step(params: &ParamVector, grad: &Gradient, lr: f64) -> Result<ParamVector> {
    let mut next = params.clone();
    sgd_step_in_place(&mut next, grad, lr)?;
    Ok(next)
}

pub fn sgd_step_in_place(params: &mut ParamVector, grad: &Gradient, lr: f64) -> Result<()> {
    check_step(params, grad, lr)?;
    for (p, g) in params.values_mut().iter_mut().zip(grad.values()) {
        *p -= lr * g;
    }
    params.check_finite()
}

/// `params - rates ⊙ grad` with one learning rate per parameter.
pub fn sgd_step_per_param(
    params: &mut ParamVector,
    grad: &Gradient,
    rates: &ParamVector,
) -> Result<()> {
    if **params.layout() != **grad.layout() || **params.layout() != **rates.layout() {
        return Err(Error::dims("per-parameter step layout", params.len(), grad.len()));
    }
    grad.check_finite()?;
    for ((p, g), r) in params.values_mut().iter_mut().zip(grad.values()).zip(rates.values()) {
        *p -= r * g;
    }
    params.check_finite()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    layout: Arc<Layout>,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamVector) -> Self {
        AdamState {
            config,
            layout: params.layout().clone(),
            first: vec![0.0; params.len()],
            second: vec![0.0; params.len()],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut ParamVector, grad: &Gradient) -> Result<()> {
        check_step(params, grad, self.config.lr)?;
        if *self.layout != **params.layout() {
            return Err(Error::dims("optimizer state layout", self.first.len(), params.len()));
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.steps += 1;
        let t = self.steps as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params
            .values_mut()
            .iter_mut()
            .zip(grad.values())
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        params.check_finite()
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(
    state: &AdamState,
    params: &ParamVector,
    grad: &Gradient,
) -> Result<(AdamState, ParamVector)> {
    let mut state = state.clone();
    let mut params = params.clone();
    state.step(&mut params, grad)?;
    Ok((state, params))
}
