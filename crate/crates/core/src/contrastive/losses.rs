//! Cross-entropy, InfoNCE and row normalization with their gradients.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, l2_norm, Matrix};

/// Rows whose norm deviates from 1 by more than this are rejected by [`info_nce`].
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Mean cross-entropy of `softmax(logits)` against integer labels, with its
/// gradient `(softmax − onehot) / batch` with respect to the logits.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() != labels.len() {
        return Err(Error::dim("cross_entropy labels", logits.rows(), labels.len()));
    }
    let n = logits.rows().max(1) as f64;
    let classes = logits.cols();
    let mut grad = Matrix::zeros(logits.rows(), classes);
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Index {
                what: "label",
                index: y,
                bound: classes,
            });
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[y];
        let g = grad.row_mut(i);
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - lse).exp() / n;
        }
        g[y] -= 1.0 / n;
    }
    Ok((total / n, grad))
}

/// Divides every row by its L2 norm; a zero row is a numeric error.
pub fn l2_normalize_rows(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let norm = l2_norm(row);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numeric(format!("cannot normalize row {i} with norm {norm}")));
        }
        row.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(out)
}

/// Pulls a gradient on `y = x/‖x‖` back to `x`: `(g − y(y·g)) / ‖x‖`.
pub fn l2_normalize_backward(raw: &Matrix, normalized: &Matrix, grad: &Matrix) -> Result<Matrix> {
    if raw.shape() != grad.shape() || normalized.shape() != grad.shape() {
        return Err(Error::dim(
            "l2_normalize_backward",
            format!("{:?}", raw.shape()),
            format!("{:?}", grad.shape()),
        ));
    }
    let mut out = Matrix::zeros(raw.rows(), raw.cols());
    for i in 0..raw.rows() {
        let norm = l2_norm(raw.row(i));
        let y = normalized.row(i);
        let g = grad.row(i);
        let proj = dot(y, g);
        for ((o, &gj), &yj) in out.row_mut(i).iter_mut().zip(g).zip(y) {
            *o = (gj - yj * proj) / norm;
        }
    }
    Ok(out)
}

pub(crate) fn check_unit_rows(m: &Matrix, what: &str) -> Result<()> {
    for (i, row) in m.row_iter().enumerate() {
        let norm = l2_norm(row);
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::Contract(format!(
                "{what} row {i} has norm {norm}, expected unit norm"
            )));
        }
    }
    Ok(())
}

/// Which keys enter each anchor's softmax denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Negatives {
    /// Every key in the store.
    All,
    /// The positive plus `K` other keys, uniform without replacement.
    Sample(usize),
}

impl Negatives {
    /// Number of keys in each denominator for a store of `key_count` entries.
    pub fn keys_used(&self, key_count: usize) -> usize {
        match *self {
            Negatives::All => key_count,
            Negatives::Sample(k) => (k + 1).min(key_count),
        }
    }
}

impl std::str::FromStr for Negatives {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(Negatives::All);
        }
        s.parse::<usize>()
            .map(Negatives::Sample)
            .map_err(|_| Error::Config(format!("negatives must be 'all' or a count, got '{s}'")))
    }
}

impl std::fmt::Display for Negatives {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Negatives::All => write!(f, "all"),
            Negatives::Sample(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InfoNceOutput {
    pub loss: f64,
    /// Gradient with respect to the (unit-norm) anchors.
    pub grad_anchors: Matrix,
    /// Keys in each denominator.
    pub keys_per_anchor: usize,
}

/// Mean over anchors of `−log softmax(a·kⱼ/τ)[positive]` over all keys.
///
/// Anchors and keys must be unit-norm rows.
pub fn info_nce(anchors: &Matrix, keys: &Matrix, positives: &[usize], tau: f64) -> Result<InfoNceOutput> {
    check_unit_rows(anchors, "anchor")?;
    check_unit_rows(keys, "key")?;
    info_nce_unchecked(anchors, keys, positives, tau, Negatives::All, None::<&mut rand_chacha::ChaCha8Rng>)
}

/// InfoNCE without the unit-norm check; `rng` must be provided for sampled negatives.
pub(crate) fn info_nce_unchecked<R: Rng>(
    anchors: &Matrix,
    keys: &Matrix,
    positives: &[usize],
    tau: f64,
    negatives: Negatives,
    rng: Option<&mut R>,
) -> Result<InfoNceOutput> {
    if !(tau > 0.0) {
        return Err(Error::Range(format!("temperature {tau} must be positive")));
    }
    if anchors.cols() != keys.cols() {
        return Err(Error::dim("info_nce key width", anchors.cols(), keys.cols()));
    }
    if positives.len() != anchors.rows() {
        return Err(Error::dim("info_nce positives", anchors.rows(), positives.len()));
    }
    if let Some(&bad) = positives.iter().find(|&&p| p >= keys.rows()) {
        return Err(Error::Index {
            what: "key",
            index: bad,
            bound: keys.rows(),
        });
    }
    let n = anchors.rows().max(1) as f64;
    let mut grad = Matrix::zeros(anchors.rows(), anchors.cols());
    let mut total = 0.0;
    let keys_per_anchor = negatives.keys_used(keys.rows());

    match negatives {
        Negatives::All => {
            let sims = anchors.matmul_t(keys)?;
            let mut probs = Matrix::zeros(anchors.rows(), keys.rows());
            for i in 0..anchors.rows() {
                let s = sims.row(i);
                let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max) / tau;
                let sum: f64 = s.iter().map(|v| (v / tau - max).exp()).sum();
                let lse = max + sum.ln();
                total += lse - s[positives[i]] / tau;
                let p = probs.row_mut(i);
                for (pj, &sj) in p.iter_mut().zip(s) {
                    *pj = (sj / tau - lse).exp() / (n * tau);
                }
                p[positives[i]] -= 1.0 / (n * tau);
            }
            grad = probs.matmul(keys)?;
        }
        Negatives::Sample(k) => {
            let rng = rng.ok_or_else(|| Error::State("sampled negatives need an rng".into()))?;
            let others = keys.rows() - 1;
            let k = k.min(others);
            let mut chosen = Vec::with_capacity(k + 1);
            for i in 0..anchors.rows() {
                let pos = positives[i];
                chosen.clear();
                chosen.push(pos);
                for j in index::sample(rng, others, k) {
                    chosen.push(if j >= pos { j + 1 } else { j });
                }
                let a = anchors.row(i);
                let s: Vec<f64> = chosen.iter().map(|&j| dot(a, keys.row(j)) / tau).collect();
                let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                total += lse - s[0];
                let g = grad.row_mut(i);
                for (c, (&j, &sj)) in chosen.iter().zip(&s).enumerate() {
                    let mut w = (sj - lse).exp();
                    if c == 0 {
                        w -= 1.0;
                    }
                    let w = w / (n * tau);
                    for (gd, &kd) in g.iter_mut().zip(keys.row(j)) {
                        *gd += w * kd;
                    }
                }
            }
        }
    }
    Ok(InfoNceOutput {
        loss: total / n,
        grad_anchors: grad,
        keys_per_anchor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn ce_uniform_two_class_is_ln2() {
        let (l, _) = cross_entropy(&m(&[vec![0.0, 0.0]]), &[0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn ce_saturated_correct_is_zero() {
        let (l, _) = cross_entropy(&m(&[vec![100.0, 0.0]]), &[0]).unwrap();
        assert!(l.abs() < 1e-40);
    }

    #[test]
    fn ce_three_logits() {
        let (l, g) = cross_entropy(&m(&[vec![1.0, 2.0, 3.0]]), &[2]).unwrap();
        // ln(1 + e⁻¹ + e⁻²)
        let expected = (1.0 + (-1.0f64).exp() + (-2.0f64).exp()).ln();
        assert!((l - expected).abs() < 1e-12);
        assert!((l - 0.4076).abs() < 5e-5);
        assert!(g.as_slice().iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn ce_rejects_out_of_range_label() {
        assert!(matches!(
            cross_entropy(&m(&[vec![0.0, 0.0]]), &[2]),
            Err(Error::Index { what: "label", .. })
        ));
    }

    #[test]
    fn info_nce_single_key_is_zero() {
        let a = m(&[vec![0.6, 0.8]]);
        let out = info_nce(&a, &a, &[0], 0.5).unwrap();
        assert_eq!(out.loss, 0.0);
    }

    #[test]
    fn info_nce_equal_similarities_is_ln_n() {
        let a = m(&[vec![1.0, 0.0, 0.0]]);
        let keys = m(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, -1.0, 0.0],
            vec![0.0, 0.0, -1.0],
        ]);
        let out = info_nce(&a, &keys, &[1], 0.7).unwrap();
        assert!((out.loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn info_nce_one_negative() {
        let a = m(&[vec![1.0, 0.0]]);
        let keys = m(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let out = info_nce(&a, &keys, &[0], 1.0).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((out.loss - expected).abs() < 1e-12);
        assert!((out.loss - 0.3133).abs() < 5e-5);
    }

    #[test]
    fn info_nce_rejects_non_unit_rows() {
        let a = m(&[vec![1.0, 1.0]]);
        let keys = m(&[vec![1.0, 0.0]]);
        assert!(matches!(info_nce(&a, &keys, &[0], 1.0), Err(Error::Contract(_))));
        assert!(matches!(info_nce(&keys, &a, &[0], 1.0), Err(Error::Contract(_))));
        assert!(matches!(info_nce(&keys, &keys, &[0], 0.0), Err(Error::Range(_))));
        assert!(matches!(info_nce(&keys, &keys, &[1], 1.0), Err(Error::Index { .. })));
    }

    #[test]
    fn sampled_negatives_with_k_covering_all_match_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let raw = Matrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let keys = l2_normalize_rows(&raw).unwrap();
        let anchors = l2_normalize_rows(&keys.select_rows(&[2, 0]).unwrap().map(|v| v + 0.1)).unwrap();
        let full = info_nce(&anchors, &keys, &[2, 0], 0.5).unwrap();
        let sampled =
            info_nce_unchecked(&anchors, &keys, &[2, 0], 0.5, Negatives::Sample(5), Some(&mut rng)).unwrap();
        assert!((full.loss - sampled.loss).abs() < 1e-12);
        assert!(full.grad_anchors.max_abs_diff(&sampled.grad_anchors) < 1e-12);
        assert_eq!(sampled.keys_per_anchor, 6);
    }

    #[test]
    fn negatives_parse() {
        assert_eq!("all".parse::<Negatives>().unwrap(), Negatives::All);
        assert_eq!("16".parse::<Negatives>().unwrap(), Negatives::Sample(16));
        assert!("x".parse::<Negatives>().is_err());
    }

    #[test]
    fn normalize_zero_row_is_numeric_error() {
        assert!(matches!(
            l2_normalize_rows(&Matrix::zeros(2, 3)),
            Err(Error::Numeric(_))
        ));
    }

    proptest! {
        #[test]
        fn info_nce_is_nonnegative(seed in 0u64..1000, anchors in 1usize..6, keys in 1usize..8, tau in 0.05f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = l2_normalize_rows(&Matrix::from_fn(anchors, 4, |_, _| rng.random_range(-1.0..1.0))).unwrap();
            let k = l2_normalize_rows(&Matrix::from_fn(keys, 4, |_, _| rng.random_range(-1.0..1.0))).unwrap();
            let pos: Vec<usize> = (0..anchors).map(|_| rng.random_range(0..keys)).collect();
            let out = info_nce(&a, &k, &pos, tau).unwrap();
            prop_assert!(out.loss >= -1e-12);
            if keys == 1 {
                prop_assert!(out.loss.abs() < 1e-12);
            } else {
                prop_assert!(out.loss > 0.0);
            }
        }
    }
}
