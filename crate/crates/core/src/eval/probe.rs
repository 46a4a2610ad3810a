//! Linear probe: a fresh classifier trained on frozen representations.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contrastive::cross_entropy;
use crate::error::{Error, Result};
use crate::numerics::{sgd_step, LinearHead, Matrix, Parameters, SgdState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr_init: f64,
    pub lr_decay_factor: f64,
    /// Steps at which the learning rate is multiplied by `lr_decay_factor`.
    pub decay_steps: Vec<usize>,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Z-score each feature with training-split statistics before fitting.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            steps: 600,
            batch_size: 256,
            lr_init: 0.1,
            lr_decay_factor: 0.1,
            decay_steps: vec![200, 400],
            momentum: 0.9,
            weight_decay: 0.0,
            standardize: true,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    /// 15K steps, batch 512, lr 0.4 decayed ×0.1 at 5K and 10K.
    pub fn reference() -> Self {
        Self {
            steps: 15_000,
            batch_size: 512,
            lr_init: 0.4,
            lr_decay_factor: 0.1,
            decay_steps: vec![5_000, 10_000],
            momentum: 0.9,
            weight_decay: 0.0,
            standardize: true,
            seed: 0,
        }
    }

    /// Same schedule shape with every step count divided by `factor`.
    pub fn scaled_down(&self, factor: usize) -> Self {
        let f = factor.max(1);
        Self {
            steps: (self.steps / f).max(1),
            decay_steps: self.decay_steps.iter().map(|s| s / f).collect(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::Config("probe steps and batch_size must be positive".into()));
        }
        if !(self.lr_init > 0.0) {
            return Err(Error::Config("probe lr_init must be positive".into()));
        }
        if self.decay_steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("probe decay_steps must be strictly increasing".into()));
        }
        if self.decay_steps.last().is_some_and(|&s| s >= self.steps) {
            return Err(Error::Config("probe decay_steps must be below steps".into()));
        }
        Ok(())
    }

    fn lr_at(&self, step: usize) -> f64 {
        let decays = self.decay_steps.iter().filter(|&&s| step >= s).count();
        self.lr_init * self.lr_decay_factor.powi(decays as i32)
    }
}

/// Per-feature affine map fitted on the training split.
#[derive(Debug, Clone)]
struct Standardizer {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &Matrix, enabled: bool) -> Self {
        let d = x.cols();
        if !enabled {
            return Self {
                mean: vec![0.0; d],
                inv_std: vec![1.0; d],
            };
        }
        let mean = x.column_means();
        let mut var = vec![0.0; d];
        for row in x.row_iter() {
            for ((v, &xi), &m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (xi - m) * (xi - m);
            }
        }
        let n = x.rows().max(1) as f64;
        let inv_std = var
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
        Self { mean, inv_std }
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        Matrix::from_fn(x.rows(), x.cols(), |i, j| (x[(i, j)] - self.mean[j]) * self.inv_std[j])
    }
}

fn accuracy(head: &LinearHead, x: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Ok(0.0);
    }
    let logits = head.logits(x)?;
    let correct = logits
        .row_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Outcome of a probe run.
#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub test_accuracy: f64,
    pub train_accuracy: f64,
    pub head: LinearHead,
}

/// Trains a zero-initialized linear head with cross-entropy and SGD on the
/// training representations and scores top-1 accuracy on the test split.
///
/// A class seen only at test time cannot be predicted, which pulls accuracy
/// toward chance rather than raising an error.
pub fn linear_probe_detailed(
    train_reps: &Matrix,
    train_labels: &[usize],
    test_reps: &Matrix,
    test_labels: &[usize],
    config: &ProbeConfig,
) -> Result<ProbeOutcome> {
    config.validate()?;
    if train_reps.cols() != test_reps.cols() {
        return Err(Error::dim("probe representation width", train_reps.cols(), test_reps.cols()));
    }
    if train_reps.rows() != train_labels.len() || test_reps.rows() != test_labels.len() {
        return Err(Error::dim(
            "probe labels",
            format!("{}/{}", train_reps.rows(), test_reps.rows()),
            format!("{}/{}", train_labels.len(), test_labels.len()),
        ));
    }
    if train_reps.rows() == 0 {
        return Err(Error::Data("probe needs training samples".into()));
    }
    let classes = train_labels
        .iter()
        .chain(test_labels)
        .copied()
        .max()
        .unwrap_or(0)
        + 1;
    let scaler = Standardizer::fit(train_reps, config.standardize);
    let x_train = scaler.apply(train_reps);
    let x_test = scaler.apply(test_reps);

    let mut head = LinearHead::zeros(x_train.cols(), classes);
    let mut sgd = SgdState::new(&head, config.lr_init, config.momentum, config.weight_decay)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = x_train.rows();
    let batch = config.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut idx = Vec::with_capacity(batch);
    let mut labels = Vec::with_capacity(batch);
    for step in 0..config.steps {
        idx.clear();
        while idx.len() < batch {
            if cursor == n {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        labels.clear();
        labels.extend(idx.iter().map(|&i| train_labels[i]));
        let xb = x_train.select_rows(&idx)?;
        let logits = head.logits(&xb)?;
        let (_, grad_logits) = cross_entropy(&logits, &labels)?;
        let gw = xb.t_matmul(&grad_logits)?;
        let gb = grad_logits.column_sums();
        sgd.learning_rate = config.lr_at(step);
        sgd_step(&mut head, &[gw.as_slice(), gb.as_slice()], &mut sgd)?;
        if !head.flatten().iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("probe diverged at step {step}")));
        }
    }
    Ok(ProbeOutcome {
        test_accuracy: accuracy(&head, &x_test, test_labels)?,
        train_accuracy: accuracy(&head, &x_train, train_labels)?,
        head,
    })
}

/// Top-1 test accuracy of a linear probe; see [`linear_probe_detailed`].
pub fn linear_probe(
    train_reps: &Matrix,
    train_labels: &[usize],
    test_reps: &Matrix,
    test_labels: &[usize],
    config: &ProbeConfig,
) -> Result<f64> {
    linear_probe_detailed(train_reps, train_labels, test_reps, test_labels, config).map(|o| o.test_accuracy)
}
