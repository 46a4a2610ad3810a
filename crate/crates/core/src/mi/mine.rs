//! Donsker–Varadhan neural MI estimation with a moving-average bias correction.
//!
//! A statistics network `f(a, b)` is trained to maximize
//! `E_joint[f] − log E_marginals[e^f]`; marginal pairs are built by pairing each
//! `a` with an independently drawn `b`. Inputs are z-scored per column first,
//! which leaves the mutual information unchanged.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{adam_step, backward, forward, AdamState, Backbone, Classifier, LinearHead, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MineConfig {
    pub hidden_dim: usize,
    /// Fully-connected layers including the scalar output layer.
    pub layer_count: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub train_steps: usize,
    pub ema_decay: f64,
}

impl Default for MineConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            layer_count: 4,
            batch_size: 256,
            learning_rate: 1e-3,
            train_steps: 2000,
            ema_decay: 0.99,
        }
    }
}

impl MineConfig {
    /// Large-scale `I(X;T)` setting: hidden 1024, batch 1K, lr 1e-4, 10K steps.
    pub fn reference_ixt() -> Self {
        Self {
            hidden_dim: 1024,
            layer_count: 4,
            batch_size: 1000,
            learning_rate: 1e-4,
            train_steps: 10_000,
            ema_decay: 0.99,
        }
    }

    /// Large-scale `I(T;Y)` setting: hidden 1024, batch 5K, lr 1e-5, 10K steps.
    pub fn reference_ity() -> Self {
        Self {
            batch_size: 5000,
            learning_rate: 1e-5,
            ..Self::reference_ixt()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_count < 2 {
            return Err(Error::Config("MINE layer_count must be ≥ 2".into()));
        }
        if self.train_steps == 0 {
            return Err(Error::Config("MINE train_steps must be ≥ 1".into()));
        }
        if self.hidden_dim == 0 || self.batch_size == 0 {
            return Err(Error::Config("MINE hidden_dim and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("MINE learning_rate must be positive".into()));
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return Err(Error::Config("MINE ema_decay must be in (0,1)".into()));
        }
        Ok(())
    }

    /// Length of the trailing window averaged into the estimate.
    pub fn tail_window(&self) -> usize {
        (self.train_steps / 10).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    /// Nats.
    pub value: f64,
    /// Standard error of the tail-window mean, nats.
    pub stderr: f64,
    pub steps_used: usize,
}

fn standardize(m: &Matrix) -> Matrix {
    let means = m.column_means();
    let n = m.rows().max(1) as f64;
    let mut var = vec![0.0; m.cols()];
    for row in m.row_iter() {
        for ((v, &x), &mu) in var.iter_mut().zip(row).zip(&means) {
            *v += (x - mu) * (x - mu);
        }
    }
    let inv_std: Vec<f64> = var
        .iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s > 1e-12 {
                1.0 / s
            } else {
                0.0
            }
        })
        .collect();
    Matrix::from_fn(m.rows(), m.cols(), |i, j| (m[(i, j)] - means[j]) * inv_std[j])
}

fn log_mean_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + (s / values.len() as f64).ln()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Estimates `I(A; B)` from paired rows of `samples_a` and `samples_b`.
pub fn mine_estimate(samples_a: &Matrix, samples_b: &Matrix, config: &MineConfig, seed: u64) -> Result<MiEstimate> {
    config.validate()?;
    if samples_a.rows() != samples_b.rows() {
        return Err(Error::dim("mine_estimate pairing", samples_a.rows(), samples_b.rows()));
    }
    let n = samples_a.rows();
    if n < 2 * config.batch_size {
        return Err(Error::Data(format!(
            "MINE needs at least {} paired samples, got {n}",
            2 * config.batch_size
        )));
    }
    let a = standardize(samples_a);
    let b = standardize(samples_b);
    let (da, db) = (a.cols(), b.cols());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = vec![config.hidden_dim; config.layer_count - 2];
    let backbone = Backbone::init(da + db, &hidden, config.hidden_dim, &mut rng)?;
    let head = LinearHead::init(config.hidden_dim, 1, &mut rng);
    let mut net = Classifier::new(backbone, head)?;
    let mut adam = AdamState::new(&net, config.learning_rate)?;

    let batch = config.batch_size;
    let tail = config.tail_window();
    let mut tail_values = Vec::with_capacity(tail);
    let mut log_ema: Option<f64> = None;
    let mut input = Matrix::zeros(2 * batch, da + db);
    let mut grad_out = Matrix::zeros(2 * batch, 1);

    for step in 0..config.train_steps {
        let joint_idx = index::sample(&mut rng, n, batch);
        for (r, i) in joint_idx.iter().enumerate() {
            let j = rng.random_range(0..n);
            let (joint_row, marg_row) = (r, batch + r);
            input.row_mut(joint_row)[..da].copy_from_slice(a.row(i));
            input.row_mut(joint_row)[da..].copy_from_slice(b.row(i));
            input.row_mut(marg_row)[..da].copy_from_slice(a.row(i));
            input.row_mut(marg_row)[da..].copy_from_slice(b.row(j));
        }
        let pass = forward(&net.backbone, &net.head, &input)?;
        let scores = pass.logits.as_slice();
        let (joint_scores, marg_scores) = scores.split_at(batch);
        let mean_joint = joint_scores.iter().sum::<f64>() / batch as f64;
        let lme = log_mean_exp(marg_scores);
        let dv = mean_joint - lme;
        if !dv.is_finite() {
            return Err(Error::Numeric(format!("MINE objective diverged at step {step}")));
        }
        if step + tail >= config.train_steps {
            tail_values.push(dv);
        }

        let decay = config.ema_decay;
        let ema = match log_ema {
            None => lme,
            Some(prev) => log_add_exp(decay.ln() + prev, (1.0 - decay).ln() + lme),
        };
        log_ema = Some(ema);

        // minimize −DV; the log-denominator gradient uses the moving average
        let g = grad_out.as_mut_slice();
        for (gi, _) in g[..batch].iter_mut().zip(joint_scores) {
            *gi = -1.0 / batch as f64;
        }
        for (gi, &s) in g[batch..].iter_mut().zip(marg_scores) {
            *gi = (s - ema).exp() / batch as f64;
        }
        let grads = backward(&net.backbone, &net.head, &pass, None, Some(&grad_out))?;
        adam_step(&mut net, &grads.tensors(), &mut adam)?;
    }

    let m = tail_values.len() as f64;
    let value = tail_values.iter().sum::<f64>() / m;
    let var = if tail_values.len() > 1 {
        tail_values.iter().map(|v| (v - value).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    Ok(MiEstimate {
        value,
        stderr: (var / m).sqrt(),
        steps_used: config.train_steps,
    })
}
