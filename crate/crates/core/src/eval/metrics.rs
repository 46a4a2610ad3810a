//! Classifier-free discriminability metrics: Recall@1 and k-means NMI.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, l2_norm, Matrix};

/// Similarities within this distance of the best are treated as tied.
const TIE_EPS: f64 = 1e-12;

pub(crate) fn normalize_or_zero(reps: &Matrix) -> Matrix {
    let mut out = reps.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let n = l2_norm(row);
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        } else {
            row.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    out
}

/// Fraction of samples whose cosine nearest neighbour (self excluded) shares their label.
///
/// Zero vectors compare with similarity 0 to everything. When several neighbours
/// tie for nearest, the query counts as a hit only if all of them share its label;
/// a class with a single sample is therefore always a miss.
pub fn recall_at_1(reps: &Matrix, labels: &[usize]) -> Result<f64> {
    if reps.rows() != labels.len() {
        return Err(Error::dim("recall_at_1 labels", reps.rows(), labels.len()));
    }
    let n = reps.rows();
    if n < 2 {
        return Err(Error::Data("recall_at_1 needs at least two samples".into()));
    }
    let unit = normalize_or_zero(reps);
    let mut hits = 0usize;
    let mut sims = vec![0.0; n];
    for i in 0..n {
        let q = unit.row(i);
        for (j, s) in sims.iter_mut().enumerate() {
            *s = if i == j { f64::NEG_INFINITY } else { dot(q, unit.row(j)) };
        }
        let best = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let all_match = sims
            .iter()
            .enumerate()
            .filter(|(j, s)| *j != i && **s >= best - TIE_EPS)
            .all(|(j, _)| labels[j] == labels[i]);
        if all_match {
            hits += 1;
        }
    }
    Ok(hits as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    pub iterations: usize,
}

pub const KMEANS_MAX_ITERATIONS: usize = 300;
pub const KMEANS_SHIFT_TOLERANCE: f64 = 1e-6;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.row_iter().enumerate() {
        let d = sq_dist(point, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// A cluster that empties is re-seeded at the point farthest from its centroid.
pub fn kmeans(data: &Matrix, k: usize, seed: u64) -> Result<ClusteringResult> {
    let n = data.rows();
    if k == 0 || k > n {
        return Err(Error::Range(format!("k = {k} must be in 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = data.cols();

    let mut centroids = Matrix::zeros(k, d);
    centroids.row_mut(0).copy_from_slice(data.row(rng.random_range(0..n)));
    let mut min_d: Vec<f64> = data.row_iter().map(|p| sq_dist(p, centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = min_d.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in min_d.iter().enumerate() {
                acc += w;
                if acc > u {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(data.row(pick));
        for (m, p) in min_d.iter_mut().zip(data.row_iter()) {
            *m = m.min(sq_dist(p, centroids.row(c)));
        }
    }

    let mut assignments = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut iterations = 0;
    loop {
        iterations += 1;
        for i in 0..n {
            let (c, dist) = nearest(data.row(i), &centroids);
            assignments[i] = c;
            dists[i] = dist;
        }
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            for (s, &v) in sums.row_mut(c).iter_mut().zip(data.row(i)) {
                *s += v;
            }
        }
        let mut next = Matrix::zeros(k, d);
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, &s) in next.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s / counts[c] as f64;
                }
            } else {
                let far = (0..n)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("n ≥ 1");
                next.row_mut(c).copy_from_slice(data.row(far));
                dists[far] = 0.0;
            }
        }
        let shift = (0..k)
            .map(|c| sq_dist(centroids.row(c), next.row(c)).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < KMEANS_SHIFT_TOLERANCE || iterations >= KMEANS_MAX_ITERATIONS {
            break;
        }
    }
    let mut inertia = 0.0;
    for i in 0..n {
        let (c, dist) = nearest(data.row(i), &centroids);
        assignments[i] = c;
        inertia += dist;
    }
    Ok(ClusteringResult {
        assignments,
        centroids,
        inertia,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmiNormalization {
    /// `MI / √(H(A)·H(L))`
    #[default]
    Sqrt,
    /// `MI / ((H(A) + H(L)) / 2)`
    Arithmetic,
}

/// Normalized mutual information between a clustering and the labels (natural log, 0/0 = 0).
pub fn nmi(assignments: &[usize], labels: &[usize]) -> Result<f64> {
    nmi_with(assignments, labels, NmiNormalization::Sqrt)
}

pub fn nmi_with(assignments: &[usize], labels: &[usize], norm: NmiNormalization) -> Result<f64> {
    if assignments.len() != labels.len() {
        return Err(Error::dim("nmi", assignments.len(), labels.len()));
    }
    let n = assignments.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut ca: HashMap<usize, usize> = HashMap::new();
    let mut cl: HashMap<usize, usize> = HashMap::new();
    for (&a, &l) in assignments.iter().zip(labels) {
        *joint.entry((a, l)).or_default() += 1;
        *ca.entry(a).or_default() += 1;
        *cl.entry(l).or_default() += 1;
    }
    let nf = n as f64;
    let h = |counts: &HashMap<usize, usize>| -> f64 {
        let mut keys: Vec<_> = counts.keys().copied().collect();
        keys.sort_unstable();
        -keys
            .iter()
            .map(|k| {
                let p = counts[k] as f64 / nf;
                p * p.ln()
            })
            .sum::<f64>()
    };
    let mut cells: Vec<_> = joint.iter().map(|(&k, &v)| (k, v)).collect();
    cells.sort_unstable();
    let mi: f64 = cells
        .iter()
        .map(|&((a, l), c)| {
            let p = c as f64 / nf;
            p * (p * nf * nf / (ca[&a] as f64 * cl[&l] as f64)).ln()
        })
        .sum();
    let (ha, hl) = (h(&ca), h(&cl));
    let denom = match norm {
        NmiNormalization::Sqrt => (ha * hl).sqrt(),
        NmiNormalization::Arithmetic => 0.5 * (ha + hl),
    };
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recall_on_identical_clusters_is_one() {
        let reps = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(recall_at_1(&reps, &[0, 0, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn recall_with_alternating_labels_is_zero() {
        // angles increasing along an arc; each nearest neighbour is adjacent
        let reps = Matrix::from_fn(6, 2, |i, j| {
            let t = 0.2 * i as f64;
            if j == 0 {
                t.cos()
            } else {
                t.sin()
            }
        });
        assert_eq!(recall_at_1(&reps, &[0, 1, 0, 1, 0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn constant_reps_are_all_misses() {
        let reps = Matrix::from_fn(4, 3, |_, _| 0.5);
        assert_eq!(recall_at_1(&reps, &[0, 0, 1, 1]).unwrap(), 0.0);
        let zeros = Matrix::zeros(4, 3);
        assert_eq!(recall_at_1(&zeros, &[0, 0, 1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn recall_singleton_class_is_a_miss() {
        let reps = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.1], vec![0.0, 1.0]]).unwrap();
        assert!((recall_at_1(&reps, &[0, 0, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(recall_at_1(&Matrix::zeros(1, 2), &[0]).is_err());
    }

    #[test]
    fn kmeans_single_cluster_is_mean() {
        let data = Matrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, -1.0]]).unwrap();
        let r = kmeans(&data, 1, 0).unwrap();
        assert!((r.centroids[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((r.centroids[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kmeans_two_point_masses() {
        let data = Matrix::from_fn(10, 2, |i, _| if i % 2 == 0 { 5.0 } else { -5.0 });
        let r = kmeans(&data, 2, 1).unwrap();
        assert_eq!(r.inertia, 0.0);
        assert_eq!(nmi(&r.assignments, &(0..10).map(|i| i % 2).collect::<Vec<_>>()).unwrap(), 1.0);
    }

    #[test]
    fn kmeans_is_deterministic_and_validates_k() {
        let data = Matrix::from_fn(50, 3, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin());
        let a = kmeans(&data, 4, 9).unwrap();
        let b = kmeans(&data, 4, 9).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.centroids, b.centroids);
        assert!(kmeans(&data, 0, 0).is_err());
        assert!(matches!(kmeans(&data, 51, 0), Err(Error::Range(_))));
    }

    #[test]
    fn kmeans_on_constant_data_gives_zero_nmi() {
        let data = Matrix::from_fn(8, 2, |_, _| 1.0);
        let r = kmeans(&data, 3, 0).unwrap();
        assert_eq!(r.assignments.len(), 8);
        assert_eq!(nmi(&r.assignments, &[0, 1, 2, 0, 1, 2, 0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn nmi_examples() {
        assert_eq!(nmi(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert!(nmi(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap().abs() < 1e-15);
        let v = nmi(&[0, 0, 0, 1], &[0, 0, 1, 1]).unwrap();
        // MI = 1.5 ln 2 - 0.75 ln 3 over sqrt(H(0.75, 0.25) · ln 2)
        let h = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        let closed = (1.5 * 2f64.ln() - 0.75 * 3f64.ln()) / (h * 2f64.ln()).sqrt();
        assert!((v - closed).abs() < 1e-12, "{v}");
        assert!((v - 0.3455).abs() < 1e-4, "{v}");
        assert!(nmi(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn nmi_arithmetic_variant() {
        let v = nmi_with(&[0, 0, 0, 1], &[0, 0, 1, 1], NmiNormalization::Arithmetic).unwrap();
        let ha = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        let mi = 0.5 * (4.0f64 / 3.0).ln() + 0.25 * (2.0f64 / 3.0).ln() + 0.25 * 2f64.ln();
        assert!((v - mi / (0.5 * (ha + 2f64.ln()))).abs() < 1e-12);
    }
}
