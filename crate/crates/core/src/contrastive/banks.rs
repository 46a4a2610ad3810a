//! Memory bank (stage-1 keys) and information bank (frozen stage-2 keys).

use rand::Rng;

use super::losses::{check_unit_rows, info_nce_unchecked, l2_normalize_rows, Negatives};
use crate::error::{Error, Result};
use crate::numerics::{l2_norm, Backbone, Matrix};

/// One unit-norm representation per training sample; row `i` is sample `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    entries: Matrix,
    momentum: f64,
}

impl MemoryBank {
    /// Builds the bank from raw (unnormalized) representations of every training sample.
    pub fn from_reps(reps: &Matrix, momentum: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::Range(format!("bank momentum {momentum} not in [0,1]")));
        }
        Ok(Self {
            entries: l2_normalize_rows(reps)?,
            momentum,
        })
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn len(&self) -> usize {
        self.entries.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.rows() == 0
    }

    /// `row_i ← normalize(m·row_i + (1 − m)·new_i)` for every id, in order.
    pub fn update(&mut self, sample_ids: &[usize], new_reps: &Matrix) -> Result<()> {
        if sample_ids.len() != new_reps.rows() {
            return Err(Error::dim("bank_update ids", new_reps.rows(), sample_ids.len()));
        }
        if new_reps.cols() != self.entries.cols() {
            return Err(Error::dim("bank_update width", self.entries.cols(), new_reps.cols()));
        }
        check_unit_rows(new_reps, "bank update")?;
        if let Some(&bad) = sample_ids.iter().find(|&&id| id >= self.len()) {
            return Err(Error::Index {
                what: "sample",
                index: bad,
                bound: self.len(),
            });
        }
        let m = self.momentum;
        let mut blended = vec![0.0; self.entries.cols()];
        for (r, &id) in sample_ids.iter().enumerate() {
            for ((b, &old), &new) in blended.iter_mut().zip(self.entries.row(id)).zip(new_reps.row(r)) {
                *b = m * old + (1.0 - m) * new;
            }
            let norm = l2_norm(&blended);
            if !(norm > 1e-12) {
                return Err(Error::Numeric(format!(
                    "bank row {id} blend cancelled to norm {norm}"
                )));
            }
            for (dst, &b) in self.entries.row_mut(id).iter_mut().zip(&blended) {
                *dst = b / norm;
            }
        }
        Ok(())
    }
}

/// Frozen snapshot of the end-of-stage-1 backbone with its cached keys.
///
/// Parameters are private and never exposed mutably.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationBank {
    backbone: Backbone,
    cached: Matrix,
}

impl InformationBank {
    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    /// Unit-norm representations of every training sample under the frozen net.
    pub fn keys(&self) -> &Matrix {
        &self.cached
    }

    pub fn len(&self) -> usize {
        self.cached.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.cached.rows() == 0
    }

    /// Normalized representations of arbitrary inputs under the frozen net.
    pub fn extract(&self, x: &Matrix) -> Result<Matrix> {
        l2_normalize_rows(&self.backbone.extract(x)?)
    }
}

/// Deep-copies `backbone` and caches normalized representations of `train_x`.
pub fn snapshot_information_bank(backbone: &Backbone, train_x: &Matrix) -> Result<InformationBank> {
    let frozen = backbone.clone();
    let cached = l2_normalize_rows(&frozen.extract(train_x)?)?;
    Ok(InformationBank {
        backbone: frozen,
        cached,
    })
}

/// Contrastive loss of one batch plus its gradient on the normalized anchors.
#[derive(Debug, Clone)]
pub struct ContrastiveTerm {
    pub loss: f64,
    pub grad: Matrix,
    pub keys_per_anchor: usize,
}

fn bank_info_nce<R: Rng>(
    batch_reps: &Matrix,
    sample_ids: &[usize],
    keys: &Matrix,
    tau: f64,
    negatives: Negatives,
    rng: &mut R,
) -> Result<ContrastiveTerm> {
    if let Some(&bad) = sample_ids.iter().find(|&&id| id >= keys.rows()) {
        return Err(Error::Index {
            what: "sample",
            index: bad,
            bound: keys.rows(),
        });
    }
    check_unit_rows(batch_reps, "batch representation")?;
    let out = info_nce_unchecked(batch_reps, keys, sample_ids, tau, negatives, Some(rng))?;
    Ok(ContrastiveTerm {
        loss: out.loss,
        grad: out.grad_anchors,
        keys_per_anchor: out.keys_per_anchor,
    })
}

/// Stage-1 term: anchors are the batch, the positive is the bank row of the same sample.
pub fn ias_loss<R: Rng>(
    batch_reps: &Matrix,
    sample_ids: &[usize],
    bank: &MemoryBank,
    tau: f64,
    negatives: Negatives,
    rng: &mut R,
) -> Result<ContrastiveTerm> {
    bank_info_nce(batch_reps, sample_ids, bank.entries(), tau, negatives, rng)
}

/// Stage-2 term: keys come from the frozen information bank; errors if no snapshot exists.
pub fn irs_loss<R: Rng>(
    batch_reps: &Matrix,
    sample_ids: &[usize],
    info_bank: Option<&InformationBank>,
    tau: f64,
    negatives: Negatives,
    rng: &mut R,
) -> Result<ContrastiveTerm> {
    let bank = info_bank
        .ok_or_else(|| Error::State("information bank has not been snapshotted".into()))?;
    bank_info_nce(batch_reps, sample_ids, bank.keys(), tau, negatives, rng)
}
