//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use ctclab::contrastive::{
    cross_entropy, ias_loss, info_nce, irs_loss, l2_normalize_rows, snapshot_information_bank, stage1_loss,
    stage2_loss, LossConfig, MemoryBank, Negatives,
};
use ctclab::numerics::{backward, finite_diff_check, Backbone, Classifier, LinearHead, Matrix, Parameters};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn unit_rows(m: &Matrix) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| {
        let n = m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        m[(i, j)] / n
    })
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Mean negative log-softmax of the labeled logit.
pub fn ce_oracle(logits: &Matrix, labels: &[usize]) -> f64 {
    let n = logits.rows();
    (0..n)
        .map(|i| log_sum_exp(logits.row(i)) - logits[(i, labels[i])])
        .sum::<f64>()
        / n as f64
}

/// InfoNCE written directly from its definition; anchors need not be unit norm.
pub fn info_nce_oracle(anchors: &Matrix, keys: &Matrix, positives: &[usize], tau: f64) -> f64 {
    let n = anchors.rows();
    let mut total = 0.0;
    for i in 0..n {
        let scores: Vec<f64> = (0..keys.rows())
            .map(|k| anchors.row(i).iter().zip(keys.row(k)).map(|(a, b)| a * b).sum::<f64>() / tau)
            .collect();
        total += log_sum_exp(&scores) - scores[positives[i]];
    }
    total / n as f64
}

fn to_matrix(flat: &[f64], rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, flat.to_vec()).unwrap()
}

/// Random backbone redrawn until no representation of `x` is all zeros, so
/// normalization is defined.
pub fn live_backbone(input: usize, hidden: &[usize], rep: usize, x: &Matrix, rng: &mut ChaCha8Rng) -> Backbone {
    loop {
        let b = Backbone::init(input, hidden, rep, rng).unwrap();
        let reps = b.extract(x).unwrap();
        if reps.row_iter().all(|row| row.iter().map(|v| v * v).sum::<f64>() > 1e-2) {
            return b;
        }
    }
}

/// Max relative finite-difference error of every loss on one random instance.
pub fn gradient_instance(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let batch = r.random_range(3..7);
    let dim = r.random_range(3..6);
    let classes = r.random_range(2..5);
    let bank_size = batch + r.random_range(2..6);
    let tau = r.random_range(0.2..1.0);
    let labels: Vec<usize> = (0..batch).map(|_| r.random_range(0..classes)).collect();
    let ids: Vec<usize> = rand::seq::index::sample(&mut r, bank_size, batch).into_vec();
    let mut out = Vec::new();

    let logits = gaussian_matrix(batch, classes, &mut r);
    let rep = finite_diff_check(
        |p| {
            let (l, g) = cross_entropy(&to_matrix(p, batch, classes), &labels).unwrap();
            (l, g.as_slice().to_vec())
        },
        logits.as_slice(),
        FD_STEP,
        1e-4,
    );
    let value_err = (cross_entropy(&logits, &labels).unwrap().0 - ce_oracle(&logits, &labels)).abs();
    out.push(("cross_entropy", rep.max_rel_error().max(value_err)));

    let anchors = unit_rows(&gaussian_matrix(batch, dim, &mut r));
    let keys = unit_rows(&gaussian_matrix(bank_size, dim, &mut r));
    let nce = info_nce(&anchors, &keys, &ids, tau).unwrap();
    let rep = finite_diff_check(
        |p| (info_nce_oracle(&to_matrix(p, batch, dim), &keys, &ids, tau), nce.grad_anchors.as_slice().to_vec()),
        anchors.as_slice(),
        FD_STEP,
        1e-4,
    );
    let value_err = (nce.loss - info_nce_oracle(&anchors, &keys, &ids, tau)).abs();
    out.push(("info_nce", rep.max_rel_error().max(value_err)));

    let bank = MemoryBank::from_reps(&gaussian_matrix(bank_size, dim, &mut r), 0.5).unwrap();
    let ias = ias_loss(&anchors, &ids, &bank, tau, Negatives::All, &mut rng(0)).unwrap();
    let rep = finite_diff_check(
        |p| (info_nce_oracle(&to_matrix(p, batch, dim), bank.entries(), &ids, tau), ias.grad.as_slice().to_vec()),
        anchors.as_slice(),
        FD_STEP,
        1e-4,
    );
    out.push(("ias", rep.max_rel_error()));

    let train_x = gaussian_matrix(bank_size, 4, &mut r);
    let snap_net = live_backbone(4, &[5], dim, &train_x, &mut r);
    let info = snapshot_information_bank(&snap_net, &train_x).unwrap();
    let irs = irs_loss(&anchors, &ids, Some(&info), tau, Negatives::All, &mut rng(0)).unwrap();
    let rep = finite_diff_check(
        |p| (info_nce_oracle(&to_matrix(p, batch, dim), info.keys(), &ids, tau), irs.grad.as_slice().to_vec()),
        anchors.as_slice(),
        FD_STEP,
        1e-4,
    );
    out.push(("irs", rep.max_rel_error()));

    let cfg = LossConfig {
        alpha: r.random_range(0.1..1.5),
        beta: r.random_range(0.1..1.5),
        tau_stage1: tau,
        tau_stage2: r.random_range(0.2..1.0),
        negatives: Negatives::All,
    };
    let reps = gaussian_matrix(batch, dim, &mut r);
    let split = batch * dim;
    let mut joint = reps.as_slice().to_vec();
    joint.extend_from_slice(logits.as_slice());
    for stage in [1, 2] {
        let eval = |p: &[f64]| {
            let reps = to_matrix(&p[..split], batch, dim);
            let logits = to_matrix(&p[split..], batch, classes);
            let s = if stage == 1 {
                stage1_loss(&reps, &logits, &labels, &ids, &bank, &cfg, &mut rng(0)).unwrap()
            } else {
                stage2_loss(&reps, &logits, &labels, &ids, Some(&info), &cfg, &mut rng(0)).unwrap()
            };
            let mut g = s.grad_reps.unwrap().as_slice().to_vec();
            g.extend_from_slice(s.grad_logits.as_slice());
            (s.total, g)
        };
        let rep = finite_diff_check(eval, &joint, FD_STEP, 1e-4);
        out.push((if stage == 1 { "stage1" } else { "stage2" }, rep.max_rel_error()));
    }

    // the stage-1 objective backpropagated into every network parameter
    let in_dim = 4;
    let x = gaussian_matrix(batch, in_dim, &mut r);
    let backbone = live_backbone(in_dim, &[6], dim, &x, &mut r);
    let mut model = Classifier::new(backbone, LinearHead::init(dim, classes, &mut r)).unwrap();
    let theta = model.flatten();
    let rep = finite_diff_check(
        |p| {
            model.load_flat(p).unwrap();
            let pass = model.forward(&x).unwrap();
            let s = stage1_loss(pass.reps(), &pass.logits, &labels, &ids, &bank, &cfg, &mut rng(0)).unwrap();
            let grads = backward(&model.backbone, &model.head, &pass, s.grad_reps.as_ref(), Some(&s.grad_logits)).unwrap();
            let g: Vec<f64> = grads.tensors().into_iter().flat_map(|t| t.iter().copied()).collect();
            (s.total, g)
        },
        &theta,
        FD_STEP,
        1e-4,
    );
    out.push(("network", rep.max_rel_error()));
    out
}

/// Plug-in MI of two code sequences, natural log.
pub fn empirical_mi_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut pa: BTreeMap<usize, f64> = BTreeMap::new();
    let mut pb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0 / n;
        *pa.entry(x).or_default() += 1.0 / n;
        *pb.entry(y).or_default() += 1.0 / n;
    }
    joint.iter().map(|(&(x, y), &p)| p * (p / (pa[&x] * pb[&y])).ln()).sum()
}

pub fn entropy_oracle(codes: &[usize]) -> f64 {
    let n = codes.len() as f64;
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for &c in codes {
        *counts.entry(c).or_default() += 1.0;
    }
    -counts.values().map(|c| (c / n) * (c / n).ln()).sum::<f64>()
}

/// MI of a joint table from its definition.
pub fn table_mi_oracle(p: &[Vec<f64>]) -> f64 {
    let rows: Vec<f64> = p.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..p[0].len()).map(|j| p.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (i, r) in p.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            if v > 0.0 {
                mi += v * (v / (rows[i] * cols[j])).ln();
            }
        }
    }
    mi
}

/// Brute-force NMI with square-root normalization from a dense contingency table.
pub fn nmi_oracle(a: &[usize], b: &[usize]) -> f64 {
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let n = a.len() as f64;
    let mut table = vec![vec![0.0; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1.0;
    }
    let row: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<f64> = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let h = |c: &[f64]| -> f64 { c.iter().filter(|&&v| v > 0.0).map(|v| -(v / n) * (v / n).ln()).sum() };
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let c = table[i][j];
            if c > 0.0 {
                mi += c / n * (c * n / (row[i] * col[j])).ln();
            }
        }
    }
    let d = (h(&row) * h(&col)).sqrt();
    if d == 0.0 {
        0.0
    } else {
        mi / d
    }
}

/// Exhaustive cosine nearest-neighbour recall; assumes no exact ties.
pub fn recall_oracle(reps: &Matrix, labels: &[usize]) -> f64 {
    let n = reps.rows();
    let norm = |i: usize| reps.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut hits = 0;
    for i in 0..n {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for j in 0..n {
            if j == i {
                continue;
            }
            let c = reps.row(i).iter().zip(reps.row(j)).map(|(a, b)| a * b).sum::<f64>() / (norm(i) * norm(j));
            if c > best.0 {
                best = (c, j);
            }
        }
        if labels[best.1] == labels[i] {
            hits += 1;
        }
    }
    hits as f64 / n as f64
}

/// Top eigenvector of the sample covariance of `data` via nalgebra.
pub fn top_eigenvector(data: &Matrix) -> (Vec<f64>, f64, f64) {
    let (n, d) = (data.rows(), data.cols());
    let x = DMatrix::from_row_slice(n, d, data.as_slice());
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let v = eig.eigenvectors.column(order[0]).iter().copied().collect();
    (v, eig.eigenvalues[order[0]], eig.eigenvalues[order[1]])
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_rotation(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

pub fn bivariate_gaussian(rho: f64, n: usize, seed: u64) -> (Matrix, Matrix) {
    let mut r = rng(seed);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = r.sample(StandardNormal);
        let e: f64 = r.sample(StandardNormal);
        a.push(x);
        b.push(rho * x + (1.0 - rho * rho).sqrt() * e);
    }
    (Matrix::new(n, 1, a).unwrap(), Matrix::new(n, 1, b).unwrap())
}

pub fn one_hot_matrix(codes: &[usize], width: usize) -> Matrix {
    Matrix::from_fn(codes.len(), width, |i, j| if codes[i] == j { 1.0 } else { 0.0 })
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn normalized(m: &Matrix) -> Matrix {
    l2_normalize_rows(m).unwrap()
}
