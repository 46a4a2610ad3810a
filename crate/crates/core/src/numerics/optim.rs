//! SGD with momentum, Adam, and the cosine learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::network::Parameters;
use crate::error::{Error, Result};

fn check_grads<P: Parameters + ?Sized>(params: &P, grads: &[&[f64]]) -> Result<()> {
    let tensors = params.tensors();
    if tensors.len() != grads.len() {
        return Err(Error::dim("optimizer tensor count", tensors.len(), grads.len()));
    }
    for ((name, p), g) in tensors.iter().zip(grads) {
        if p.len() != g.len() {
            return Err(Error::dim(format!("gradient for {name}"), p.len(), g.len()));
        }
        if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient in {name} at element {pos}"
            )));
        }
    }
    Ok(())
}

fn buffers_like<P: Parameters + ?Sized>(params: &P) -> Vec<Vec<f64>> {
    params.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new<P: Parameters + ?Sized>(
        params: &P,
        learning_rate: f64,
        momentum: f64,
        weight_decay: f64,
    ) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Range(format!("learning rate {learning_rate}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Range(format!("momentum {momentum} not in [0,1)")));
        }
        if !(weight_decay >= 0.0) {
            return Err(Error::Range(format!("weight decay {weight_decay}")));
        }
        Ok(Self {
            learning_rate,
            momentum,
            weight_decay,
            velocity: buffers_like(params),
        })
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }
}

/// `g ← g + wd·p; v ← μ·v + g; p ← p − lr·v`.
///
/// Gradients are validated before any parameter is touched.
pub fn sgd_step<P: Parameters + ?Sized>(params: &mut P, grads: &[&[f64]], state: &mut SgdState) -> Result<()> {
    check_grads(params, grads)?;
    if state.velocity.len() != grads.len() {
        return Err(Error::dim("sgd velocity buffers", state.velocity.len(), grads.len()));
    }
    let (lr, mu, wd) = (state.learning_rate, state.momentum, state.weight_decay);
    for (((_, p), g), v) in params.tensors_mut().into_iter().zip(grads).zip(&mut state.velocity) {
        for ((pi, &gi), vi) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
            let g_total = gi + wd * *pi;
            *vi = mu * *vi + g_total;
            *pi -= lr * *vi;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new<P: Parameters + ?Sized>(params: &P, learning_rate: f64) -> Result<Self> {
        Self::with_betas(params, learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas<P: Parameters + ?Sized>(
        params: &P,
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Range(format!("learning rate {learning_rate}")));
        }
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Range(format!("{name} {b} not in (0,1)")));
            }
        }
        if !(epsilon > 0.0) {
            return Err(Error::Range(format!("epsilon {epsilon}")));
        }
        Ok(Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            first: buffers_like(params),
            second: buffers_like(params),
            step: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Bias-corrected Adam update; increments the step counter.
pub fn adam_step<P: Parameters + ?Sized>(params: &mut P, grads: &[&[f64]], state: &mut AdamState) -> Result<()> {
    check_grads(params, grads)?;
    if state.first.len() != grads.len() {
        return Err(Error::dim("adam moment buffers", state.first.len(), grads.len()));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps, lr) = (state.beta1, state.beta2, state.epsilon, state.learning_rate);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let tensors = params.tensors_mut().into_iter().zip(grads);
    for (((_, p), g), (m, v)) in tensors.zip(state.first.iter_mut().zip(state.second.iter_mut())) {
        for (i, pi) in p.iter_mut().enumerate() {
            let gi = g[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *pi -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineSchedule {
    pub lr_init: f64,
    pub lr_min: f64,
    pub total_steps: usize,
}

impl CosineSchedule {
    pub fn new(lr_init: f64, lr_min: f64, total_steps: usize) -> Result<Self> {
        if !(lr_init > 0.0 && lr_init.is_finite()) {
            return Err(Error::Range(format!("lr_init {lr_init}")));
        }
        if !(lr_min >= 0.0 && lr_min <= lr_init) {
            return Err(Error::Range(format!("lr_min {lr_min} not in [0, {lr_init}]")));
        }
        if total_steps == 0 {
            return Err(Error::Range("cosine schedule needs total_steps ≥ 1".into()));
        }
        Ok(Self {
            lr_init,
            lr_min,
            total_steps,
        })
    }
}

/// `lr_min + ½(lr_init − lr_min)(1 + cos(π·step/total))`.
pub fn cosine_lr(schedule: &CosineSchedule, step: usize) -> Result<f64> {
    if step > schedule.total_steps {
        return Err(Error::Range(format!(
            "step {step} beyond schedule length {}",
            schedule.total_steps
        )));
    }
    if step == schedule.total_steps {
        return Ok(schedule.lr_min);
    }
    let progress = step as f64 / schedule.total_steps as f64;
    let span = schedule.lr_init - schedule.lr_min;
    let lr = schedule.lr_init - 0.5 * span * (1.0 - (std::f64::consts::PI * progress).cos());
    Ok(lr.max(schedule.lr_min))
}
