//! Combined per-stage objectives: `α·L_IAS + L_CE` and `β·L_IRS + L_CE`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::banks::{ias_loss, irs_loss, ContrastiveTerm, InformationBank, MemoryBank};
use super::losses::{cross_entropy, l2_normalize_backward, l2_normalize_rows, Negatives};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub tau_stage1: f64,
    pub tau_stage2: f64,
    pub negatives: Negatives,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 1.0,
            tau_stage1: 0.5,
            tau_stage2: 0.4,
            negatives: Negatives::All,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and ≥ 0, got {w}")));
            }
        }
        for (name, t) in [("tau_stage1", self.tau_stage1), ("tau_stage2", self.tau_stage2)] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0, got {t}")));
            }
        }
        if self.negatives == Negatives::Sample(0) {
            return Err(Error::Config("negatives must be 'all' or ≥ 1".into()));
        }
        Ok(())
    }
}

/// Value and gradients of a stage objective for one batch.
#[derive(Debug, Clone)]
pub struct StageLoss {
    pub total: f64,
    pub ce: f64,
    /// Unweighted contrastive term; `None` when its weight is zero.
    pub contrastive: Option<f64>,
    pub grad_logits: Matrix,
    /// Gradient on the raw representation; `None` when the weight is zero.
    pub grad_reps: Option<Matrix>,
    /// Normalized batch representations (used to refresh the memory bank).
    pub normalized_reps: Option<Matrix>,
}

fn combine(
    reps: &Matrix,
    logits: &Matrix,
    labels: &[usize],
    weight: f64,
    term: impl FnOnce(&Matrix) -> Result<ContrastiveTerm>,
) -> Result<StageLoss> {
    let (ce, grad_logits) = cross_entropy(logits, labels)?;
    if weight == 0.0 {
        return Ok(StageLoss {
            total: ce,
            ce,
            contrastive: None,
            grad_logits,
            grad_reps: None,
            normalized_reps: None,
        });
    }
    let normalized = l2_normalize_rows(reps)?;
    let t = term(&normalized)?;
    let mut g = t.grad;
    g.scale(weight);
    let grad_reps = l2_normalize_backward(reps, &normalized, &g)?;
    Ok(StageLoss {
        total: ce + weight * t.loss,
        ce,
        contrastive: Some(t.loss),
        grad_logits,
        grad_reps: Some(grad_reps),
        normalized_reps: Some(normalized),
    })
}

/// Information-aggregation objective on raw representations and logits.
#[allow(clippy::too_many_arguments)]
pub fn stage1_loss<R: Rng>(
    reps: &Matrix,
    logits: &Matrix,
    labels: &[usize],
    sample_ids: &[usize],
    bank: &MemoryBank,
    config: &LossConfig,
    rng: &mut R,
) -> Result<StageLoss> {
    combine(reps, logits, labels, config.alpha, |n| {
        ias_loss(n, sample_ids, bank, config.tau_stage1, config.negatives, rng)
    })
}

/// Information-revitalization objective on raw representations and logits.
#[allow(clippy::too_many_arguments)]
pub fn stage2_loss<R: Rng>(
    reps: &Matrix,
    logits: &Matrix,
    labels: &[usize],
    sample_ids: &[usize],
    info_bank: Option<&InformationBank>,
    config: &LossConfig,
    rng: &mut R,
) -> Result<StageLoss> {
    combine(reps, logits, labels, config.beta, |n| {
        irs_loss(n, sample_ids, info_bank, config.tau_stage2, config.negatives, rng)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_reduce_to_cross_entropy_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reps = Matrix::from_fn(4, 3, |_, _| rng.random_range(0.1..1.0));
        let logits = Matrix::from_fn(4, 2, |_, _| rng.random_range(-2.0..2.0));
        let labels = [0, 1, 1, 0];
        let bank = MemoryBank::from_reps(&reps, 0.5).unwrap();
        let cfg = LossConfig {
            alpha: 0.0,
            beta: 0.0,
            ..LossConfig::default()
        };
        let (ce, g) = cross_entropy(&logits, &labels).unwrap();
        let s1 = stage1_loss(&reps, &logits, &labels, &[0, 1, 2, 3], &bank, &cfg, &mut rng).unwrap();
        assert_eq!(s1.total.to_bits(), ce.to_bits());
        assert_eq!(s1.grad_logits, g);
        assert!(s1.grad_reps.is_none());
        // no snapshot needed when β = 0
        let s2 = stage2_loss(&reps, &logits, &labels, &[0, 1, 2, 3], None, &cfg, &mut rng).unwrap();
        assert_eq!(s2.total.to_bits(), ce.to_bits());
    }

    #[test]
    fn missing_snapshot_is_state_error() {
        let reps = Matrix::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 0.1 });
        let logits = Matrix::zeros(2, 2);
        let cfg = LossConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            stage2_loss(&reps, &logits, &[0, 1], &[0, 1], None, &cfg, &mut rng),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        let bad = LossConfig {
            tau_stage1: 0.0,
            ..LossConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = LossConfig {
            alpha: -1.0,
            ..LossConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
