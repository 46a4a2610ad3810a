//! Source/target dataset pairs that share a latent subspace.
//!
//! A common orthonormal basis `Q` of the ambient space is split into three
//! blocks: shared, source-private and target-private. Source inputs are
//! `Q_shared·z + Q_src·z_s + ε`; target inputs are `Q_shared·z + B·z_t + ε`
//! where the target-private mixing `B = √ω·Q_src·R + √(1−ω)·Q_tgt` places a
//! fraction `ω` of the target's private variance inside the source-private
//! subspace (`R` is a random rotation). Source labels are the argmax of random
//! linear scores of `[w·z ; z_s]` with a small shared weight `w`, so the private
//! latent dominates; target labels are the argmax of random linear scores of `z`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, DatasetPair, Split};
use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedPatternSpec {
    pub shared_dim: usize,
    pub source_private_dim: usize,
    pub target_private_dim: usize,
    pub source_classes: usize,
    pub target_classes: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub noise_std: f64,
    /// Weight of the shared latent in the source labeling scores.
    pub source_shared_weight: f64,
    /// Fraction of target-private variance lying in the source-private subspace, in `[0, 1]`.
    pub target_private_overlap: f64,
    pub seed: u64,
}

impl Default for SharedPatternSpec {
    fn default() -> Self {
        Self {
            shared_dim: 8,
            source_private_dim: 8,
            target_private_dim: 8,
            source_classes: 10,
            target_classes: 4,
            train_samples: 2000,
            test_samples: 1000,
            noise_std: 0.1,
            source_shared_weight: 0.3,
            target_private_overlap: 0.5,
            seed: 0,
        }
    }
}

impl SharedPatternSpec {
    pub fn ambient_dim(&self) -> usize {
        self.shared_dim + self.source_private_dim + self.target_private_dim
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("shared_dim", self.shared_dim),
            ("source_private_dim", self.source_private_dim),
            ("target_private_dim", self.target_private_dim),
            ("train_samples", self.train_samples),
            ("test_samples", self.test_samples),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be ≥ 1")));
            }
        }
        for (name, v) in [
            ("source_classes", self.source_classes),
            ("target_classes", self.target_classes),
        ] {
            if v < 2 {
                return Err(Error::Config(format!("{name} must be ≥ 2")));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise_std must be ≥ 0, got {}", self.noise_std)));
        }
        if !(self.source_shared_weight >= 0.0 && self.source_shared_weight.is_finite()) {
            return Err(Error::Config("source_shared_weight must be ≥ 0".into()));
        }
        if !(0.0..=1.0).contains(&self.target_private_overlap) {
            return Err(Error::Config("target_private_overlap must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Orthonormal `n × n` matrix from modified Gram–Schmidt on a seeded Gaussian.
pub fn random_orthonormal<R: Rng>(n: usize, rng: &mut R) -> Matrix {
    loop {
        let g = Matrix::from_fn(n, n, |_, _| rng.sample(StandardNormal));
        // orthonormalize columns
        let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| g[(i, j)]).collect()).collect();
        let mut ok = true;
        for j in 0..n {
            for k in 0..j {
                let p = dot(&cols[j], &cols[k]);
                let ck = cols[k].clone();
                cols[j].iter_mut().zip(&ck).for_each(|(a, b)| *a -= p * b);
            }
            let norm = dot(&cols[j], &cols[j]).sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            cols[j].iter_mut().for_each(|v| *v /= norm);
        }
        if ok {
            return Matrix::from_fn(n, n, |i, j| cols[j][i]);
        }
    }
}

/// Generated pair plus the latents and labelings that produced it.
#[derive(Debug, Clone)]
pub struct SharedPair {
    pub source: DatasetPair,
    pub target: DatasetPair,
    /// Ambient basis; columns are shared, then source-private, then target-private.
    pub basis: Matrix,
    /// `D × target_private_dim` mixing of the target-private latent.
    pub target_private_mixing: Matrix,
    /// Labeling scores for the target, `target_classes × shared_dim`.
    pub target_scores: Matrix,
    /// Labeling scores for the source, `source_classes × (shared + source_private)`.
    pub source_scores: Matrix,
    /// `[train ; test]` shared latents of the target, row-aligned with its samples.
    pub target_shared_latents: Matrix,
}

fn argmax_score(scores: &Matrix, v: &[f64]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (c, row) in scores.row_iter().enumerate() {
        let s = dot(row, v);
        if s > best.1 {
            best = (c, s);
        }
    }
    best.0
}

/// Target labeling rule as a pure function of the shared latent.
pub fn target_label(scores: &Matrix, shared: &[f64]) -> usize {
    argmax_score(scores, shared)
}

struct Side<'a> {
    name: &'a str,
    /// `D × (shared + private)`.
    mixing: Matrix,
    classes: usize,
    label: &'a dyn Fn(&[f64], &[f64]) -> usize,
}

fn sample_side<R: Rng>(spec: &SharedPatternSpec, side: &Side, rng: &mut R) -> Result<(DatasetPair, Matrix)> {
    let total = spec.train_samples + spec.test_samples;
    let d = side.mixing.rows();
    let k = side.mixing.cols();
    let mut features = Matrix::zeros(total, d);
    let mut labels = Vec::with_capacity(total);
    let mut shared_latents = Matrix::zeros(total, spec.shared_dim);
    let mut latent = vec![0.0; k];
    for i in 0..total {
        for v in latent.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let (z, private) = latent.split_at(spec.shared_dim);
        shared_latents.row_mut(i).copy_from_slice(z);
        labels.push((side.label)(z, private));
        let row = features.row_mut(i);
        for (r, out) in row.iter_mut().enumerate() {
            let mixed = dot(side.mixing.row(r), &latent);
            let noise: f64 = if spec.noise_std > 0.0 {
                spec.noise_std * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            *out = mixed + noise;
        }
    }
    let train_idx: Vec<usize> = (0..spec.train_samples).collect();
    let test_idx: Vec<usize> = (spec.train_samples..total).collect();
    let pair = DatasetPair {
        train: Dataset::new(
            side.name,
            Split::Train,
            features.select_rows(&train_idx)?,
            labels[..spec.train_samples].to_vec(),
            side.classes,
        )?,
        test: Dataset::new(
            side.name,
            Split::Test,
            features.select_rows(&test_idx)?,
            labels[spec.train_samples..].to_vec(),
            side.classes,
        )?,
    };
    Ok((pair, shared_latents))
}

pub fn gen_shared_pair(spec: &SharedPatternSpec) -> Result<SharedPair> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (sh, sp, tp) = (spec.shared_dim, spec.source_private_dim, spec.target_private_dim);
    let d = spec.ambient_dim();
    let basis = random_orthonormal(d, &mut rng);
    let source_scores = Matrix::from_fn(spec.source_classes, sh + sp, |_, _| rng.sample(StandardNormal));
    let target_scores = Matrix::from_fn(spec.target_classes, sh, |_, _| rng.sample(StandardNormal));
    // leading sp × tp block of a rotation: orthonormal columns whenever sp ≥ tp
    let rotation = random_orthonormal(sp.max(tp), &mut rng);
    let (a, b) = (spec.target_private_overlap.sqrt(), (1.0 - spec.target_private_overlap).sqrt());
    let target_private_mixing = Matrix::from_fn(d, tp, |r, j| {
        let inside: f64 = (0..sp).map(|m| basis[(r, sh + m)] * rotation[(m, j)]).sum();
        a * inside + b * basis[(r, sh + sp + j)]
    });
    let source_mixing = Matrix::from_fn(d, sh + sp, |r, j| basis[(r, j)]);
    let target_mixing = Matrix::from_fn(d, sh + tp, |r, j| {
        if j < sh {
            basis[(r, j)]
        } else {
            target_private_mixing[(r, j - sh)]
        }
    });

    let w = spec.source_shared_weight;
    let source_label = |z: &[f64], private: &[f64]| {
        let input: Vec<f64> = z.iter().map(|v| w * v).chain(private.iter().copied()).collect();
        argmax_score(&source_scores, &input)
    };
    let target_rule = |z: &[f64], _: &[f64]| target_label(&target_scores, z);
    let (source, _) = sample_side(
        spec,
        &Side {
            name: "source",
            mixing: source_mixing,
            classes: spec.source_classes,
            label: &source_label,
        },
        &mut rng,
    )?;
    let (target, target_shared_latents) = sample_side(
        spec,
        &Side {
            name: "target",
            mixing: target_mixing,
            classes: spec.target_classes,
            label: &target_rule,
        },
        &mut rng,
    )?;
    Ok(SharedPair {
        source,
        target,
        basis,
        target_private_mixing,
        target_scores,
        source_scores,
        target_shared_latents,
    })
}

/// Additive Gaussian noise (std = `strength`) followed by coordinate dropout at
/// rate `strength / 10`, clamped to `[0, 0.5]`. `strength = 0` is the identity.
pub fn augment(batch: &Matrix, strength: f64, seed: u64) -> Result<Matrix> {
    if !(strength >= 0.0 && strength.is_finite()) {
        return Err(Error::Range(format!("augmentation strength {strength}")));
    }
    if strength == 0.0 {
        return Ok(batch.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drop_rate = (strength / 10.0).clamp(0.0, 0.5);
    let mut out = batch.clone();
    for v in out.as_mut_slice() {
        let noise: f64 = rng.sample(StandardNormal);
        *v += strength * noise;
        if rng.random::<f64>() < drop_rate {
            *v = 0.0;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SharedPatternSpec {
        SharedPatternSpec {
            train_samples: 60,
            test_samples: 40,
            ..SharedPatternSpec::default()
        }
    }

    #[test]
    fn same_seed_same_data() {
        let a = gen_shared_pair(&small_spec()).unwrap();
        let b = gen_shared_pair(&small_spec()).unwrap();
        assert_eq!(a.source, b.source);
        assert_eq!(a.target, b.target);
        let mut other = small_spec();
        other.seed = 1;
        assert_ne!(gen_shared_pair(&other).unwrap().source, a.source);
    }

    #[test]
    fn shapes_follow_spec() {
        let p = gen_shared_pair(&small_spec()).unwrap();
        assert_eq!(p.source.train.features.shape(), (60, 24));
        assert_eq!(p.target.test.features.shape(), (40, 24));
        assert_eq!(p.source.train.class_count, 10);
        assert_eq!(p.target.train.class_count, 4);
        let q = &p.basis;
        let qtq = q.t_matmul(q).unwrap();
        assert!(qtq.max_abs_diff(&Matrix::identity(24)) < 1e-12);
    }

    #[test]
    fn noiseless_target_labels_follow_the_partition() {
        let spec = SharedPatternSpec {
            noise_std: 0.0,
            ..small_spec()
        };
        let p = gen_shared_pair(&spec).unwrap();
        // recover z from features through the basis and relabel
        let all = [&p.target.train, &p.target.test];
        let mut row = 0;
        for ds in all {
            for (x, &y) in ds.features.row_iter().zip(&ds.labels) {
                let z: Vec<f64> = (0..spec.shared_dim)
                    .map(|k| (0..24).map(|r| p.basis[(r, k)] * x[r]).sum())
                    .collect();
                assert_eq!(target_label(&p.target_scores, &z), y);
                let latent = p.target_shared_latents.row(row);
                assert!(z.iter().zip(latent).all(|(a, b)| (a - b).abs() < 1e-10));
                row += 1;
            }
        }
    }

    #[test]
    fn invalid_specs() {
        let mut s = small_spec();
        s.shared_dim = 0;
        assert!(matches!(gen_shared_pair(&s), Err(Error::Config(_))));
        let mut s = small_spec();
        s.noise_std = -1.0;
        assert!(gen_shared_pair(&s).is_err());
    }

    #[test]
    fn augment_contracts() {
        let x = Matrix::from_fn(4, 3, |i, j| (i + j) as f64);
        assert_eq!(augment(&x, 0.0, 1).unwrap(), x);
        assert_eq!(augment(&x, 0.5, 7).unwrap(), augment(&x, 0.5, 7).unwrap());
        assert_ne!(augment(&x, 0.5, 7).unwrap(), augment(&x, 0.5, 8).unwrap());
        assert!(augment(&x, -1.0, 0).is_err());
    }

    #[test]
    fn augment_noise_has_requested_scale() {
        let zeros = Matrix::zeros(100, 100);
        let out = augment(&zeros, 1.0, 3).unwrap();
        let v = out.as_slice();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // dropout at rate 0.1 zeroes entries: E[x²] = 0.9, so std ≈ 0.949.
        let expected = 0.9f64.sqrt();
        let kurt_term = (3.0 * 0.9 - 0.81) / n; // Var of sample variance for this mixture
        let sigma_std = kurt_term.sqrt() / (2.0 * expected);
        assert!((var.sqrt() - expected).abs() <= 3.0 * sigma_std, "std {}", var.sqrt());
    }
}
