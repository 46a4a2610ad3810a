mod common;

use common::*;
use ctclab::eval::{nmi, nmi_with, recall_at_1, NmiNormalization};
use ctclab::mi::{
    discrete_mi_exact, empirical_entropy, gaussian_entropy, infonce_entropy_bound, max_mi_linear_direction,
    mine_estimate, DiscreteJoint, MineConfig,
};
use ctclab::numerics::Matrix;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn gradient_instances_pass() {
    for seed in 100..105 {
        for (name, err) in gradient_instance(seed) {
            assert!(err <= 1e-4, "{name} at seed {seed}: {err:.3e}");
        }
    }
}

#[test]
fn gaussian_entropy_matches_log_determinant() {
    let mut r = rng(8);
    for d in 1..6 {
        let a = gaussian_matrix(d, d, &mut r);
        let cov = Matrix::from_fn(d, d, |i, j| {
            (0..d).map(|k| a[(i, k)] * a[(j, k)]).sum::<f64>() + if i == j { 0.5 } else { 0.0 }
        });
        let det = DMatrix::from_row_slice(d, d, cov.as_slice()).determinant();
        let expected = 0.5 * ((2.0 * std::f64::consts::PI * std::f64::consts::E).powi(d as i32) * det).ln();
        assert!((gaussian_entropy(&cov).unwrap() - expected).abs() < 1e-10);
    }
}

#[test]
fn mine_is_reproducible_and_respects_rho() {
    let cfg = MineConfig {
        train_steps: 600,
        ..MineConfig::default()
    };
    let (a, b) = bivariate_gaussian(0.8, 4000, 1);
    let x = mine_estimate(&a, &b, &cfg, 3).unwrap();
    let y = mine_estimate(&a, &b, &cfg, 3).unwrap();
    assert_eq!(x.value.to_bits(), y.value.to_bits());
    let exact = 0.5 * (1.0 / (1.0f64 - 0.64)).ln();
    assert!(x.value < exact + 0.05 && x.value > 0.2, "estimate {}", x.value);
}

#[test]
fn unit_line_entropy_bound_is_tight_for_identical_codes() {
    let n = 64;
    let codes: Vec<usize> = (0..n).map(|i| i % 4).collect();
    let emb = one_hot_matrix(&codes, 4);
    let ids: Vec<usize> = (0..n).collect();
    let loss = ctclab::contrastive::info_nce(&emb, &emb, &ids, 0.01).unwrap().loss;
    let bound = infonce_entropy_bound(loss, n);
    assert!((bound - 4f64.ln()).abs() < 1e-6);
    assert!((empirical_entropy(&codes) - entropy_oracle(&codes)).abs() < 1e-12);
}

fn partition(max_n: usize, max_k: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (2..max_n).prop_flat_map(move |n| {
        (
            prop::collection::vec(0..max_k, n),
            prop::collection::vec(0..max_k, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn discrete_mi_matches_definition(weights in prop::collection::vec(0.0f64..1.0, 2..=64), cols in 1usize..=8) {
        let cols = cols.min(weights.len());
        let rows = weights.len() / cols;
        let w = &weights[..rows * cols];
        prop_assume!(w.iter().sum::<f64>() > 1e-3);
        let joint = DiscreteJoint::from_weights(Matrix::new(rows, cols, w.to_vec()).unwrap()).unwrap();
        let t = joint.table();
        let p: Vec<Vec<f64>> = (0..rows).map(|i| t.row(i).to_vec()).collect();
        let mi = discrete_mi_exact(&joint);
        prop_assert!((mi - table_mi_oracle(&p)).abs() < 1e-12);
        prop_assert!(mi >= 0.0);
    }

    #[test]
    fn factorized_joint_has_zero_mi(px in prop::collection::vec(0.01f64..1.0, 1..6), py in prop::collection::vec(0.01f64..1.0, 1..6)) {
        let w = Matrix::from_fn(px.len(), py.len(), |i, j| px[i] * py[j]);
        let mi = discrete_mi_exact(&DiscreteJoint::from_weights(w).unwrap());
        prop_assert!(mi.abs() < 1e-12);
    }

    #[test]
    fn nmi_matches_brute_force((a, b) in partition(120, 6)) {
        prop_assert!((nmi(&a, &b).unwrap() - nmi_oracle(&a, &b)).abs() <= 1e-9);
    }

    #[test]
    fn nmi_is_permutation_and_relabel_invariant((a, b) in partition(80, 5), shift in 1usize..5, seed in 0u64..1000) {
        let base = nmi(&a, &b).unwrap();
        let relabeled: Vec<usize> = a.iter().map(|x| (x + shift) % 5 + 7).collect();
        prop_assert!((nmi(&relabeled, &b).unwrap() - base).abs() < 1e-12);
        let mut order: Vec<usize> = (0..a.len()).collect();
        let mut r = rng(seed);
        for i in (1..order.len()).rev() {
            order.swap(i, r.random_range(0..=i));
        }
        let pa: Vec<usize> = order.iter().map(|&i| a[i]).collect();
        let pb: Vec<usize> = order.iter().map(|&i| b[i]).collect();
        prop_assert!((nmi(&pa, &pb).unwrap() - base).abs() < 1e-12);
        let arith = nmi_with(&a, &b, NmiNormalization::Arithmetic).unwrap();
        prop_assert!((0.0..=1.0).contains(&arith) && arith <= base + 1e-12);
    }

    #[test]
    fn recall_matches_exhaustive_search(seed in 0u64..10_000, n in 2usize..60, dim in 2usize..6, k in 1usize..5) {
        let mut r = rng(seed);
        let reps = gaussian_matrix(n, dim, &mut r);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let got = recall_at_1(&reps, &labels).unwrap();
        prop_assert_eq!(got, recall_oracle(&reps, &labels));
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn pca_direction_matches_eigenvector(seed in 0u64..10_000, d in 2usize..7) {
        let mut r = rng(seed);
        let scales: Vec<f64> = (0..d).map(|j| if j == 0 { 3.0 } else { r.random_range(0.2..1.5) }).collect();
        let q = random_rotation(d, &mut r);
        let z = DMatrix::from_fn(400, d, |_, j| r.random_range(-1.0..1.0) * scales[j]);
        let x = z * q.transpose();
        let data = Matrix::from_fn(400, d, |i, j| x[(i, j)]);
        let (v, top, second) = top_eigenvector(&data);
        prop_assume!(top > 1.05 * second);
        let found = max_mi_linear_direction(&data, seed).unwrap();
        let cos: f64 = found.direction.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().abs();
        prop_assert!(cos >= 0.999, "cos {}", cos);
        // the oracle uses the unbiased n - 1 normalization
        let top_population = top * 399.0 / 400.0;
        prop_assert!((found.variance - top_population).abs() < 1e-6 * top);
    }
}
