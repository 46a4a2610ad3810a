//! Exact information quantities for discrete and Gaussian variables.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Joint probability table `p(x, y)`; rows index `x`, columns index `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    table: Matrix,
}

impl DiscreteJoint {
    pub fn new(table: Matrix) -> Result<Self> {
        if table.rows() == 0 || table.cols() == 0 {
            return Err(Error::Contract("joint table is empty".into()));
        }
        if let Some(v) = table.as_slice().iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Contract(format!("joint entry {v} is not a probability")));
        }
        let total: f64 = table.as_slice().iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Contract(format!("joint sums to {total}, expected 1")));
        }
        Ok(Self { table })
    }

    /// Normalizes arbitrary nonnegative weights into a joint.
    pub fn from_weights(weights: Matrix) -> Result<Self> {
        let total: f64 = weights.as_slice().iter().sum();
        if !(total > 0.0) {
            return Err(Error::Contract("weights must have positive mass".into()));
        }
        Self::new(weights.map(|v| v / total))
    }

    pub fn table(&self) -> &Matrix {
        &self.table
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        self.table.row_iter().map(|r| r.iter().sum()).collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        self.table.column_sums()
    }

    /// Draws `n` iid `(x, y)` index pairs.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
        let flat = self.table.as_slice();
        let cols = self.table.cols();
        let mut cdf = Vec::with_capacity(flat.len());
        let mut acc = 0.0;
        for &p in flat {
            acc += p;
            cdf.push(acc);
        }
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.random::<f64>() * acc;
            let cell = cdf.partition_point(|&c| c <= u).min(flat.len() - 1);
            xs.push(cell / cols);
            ys.push(cell % cols);
        }
        (xs, ys)
    }
}

/// `Σ p(x,y) ln[p(x,y) / (p(x)p(y))]` with `0·ln 0 = 0`.
pub fn discrete_mi_exact(joint: &DiscreteJoint) -> f64 {
    let px = joint.marginal_x();
    let py = joint.marginal_y();
    let t = joint.table();
    let mut mi = 0.0;
    for i in 0..t.rows() {
        for j in 0..t.cols() {
            let p = t[(i, j)];
            if p > 0.0 {
                mi += p * (p / (px[i] * py[j])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Shannon entropy (nats) of a probability vector; zero entries contribute 0.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Plug-in entropy (nats) of the empirical distribution of discrete codes.
pub fn empirical_entropy(codes: &[usize]) -> f64 {
    if codes.is_empty() {
        return 0.0;
    }
    let k = codes.iter().copied().max().unwrap_or(0) + 1;
    let mut counts = vec![0usize; k];
    for &c in codes {
        counts[c] += 1;
    }
    let n = codes.len() as f64;
    entropy(&counts.iter().map(|&c| c as f64 / n).collect::<Vec<_>>())
}

/// One-hot encoding of `codes` into `width` columns.
pub fn one_hot(codes: &[usize], width: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(codes.len(), width);
    for (i, &c) in codes.iter().enumerate() {
        if c >= width {
            return Err(Error::Index {
                what: "one-hot code",
                index: c,
                bound: width,
            });
        }
        m[(i, c)] = 1.0;
    }
    Ok(m)
}

/// Differential entropy of `N(μ, Σ)`: `½ ln|Σ| + D/2 (1 + ln 2π)`.
pub fn gaussian_entropy(covariance: &Matrix) -> Result<f64> {
    let d = covariance.rows();
    if d == 0 || covariance.cols() != d {
        return Err(Error::Contract(format!(
            "covariance must be square and non-empty, got {:?}",
            covariance.shape()
        )));
    }
    let scale = covariance.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..d {
        for j in 0..i {
            if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-12 * scale.max(1.0) {
                return Err(Error::Contract("covariance is not symmetric".into()));
            }
        }
    }
    // Cholesky; ln|Σ| = 2 Σ ln Lᵢᵢ
    let mut l = Matrix::zeros(d, d);
    let mut log_det = 0.0;
    for j in 0..d {
        let mut diag = covariance[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) {
            return Err(Error::Contract("covariance is not positive definite".into()));
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        log_det += 2.0 * ljj.ln();
        for i in j + 1..d {
            let mut s = covariance[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    Ok(0.5 * log_det + d as f64 / 2.0 * (1.0 + two_pi.ln()))
}

/// `ln N − L`: the lower bound on `min(H(T₁), H(T₂))` implied by an InfoNCE loss
/// over `key_count` keys.
pub fn infonce_entropy_bound(loss: f64, key_count: usize) -> f64 {
    (key_count as f64).ln() - loss
}

/// `−½ ln(1 − ρ²)`, the mutual information of a standard bivariate Gaussian.
pub fn gaussian_mi(rho: f64) -> f64 {
    -0.5 * (1.0 - rho * rho).ln()
}

/// `n` draws of a standard bivariate Gaussian with correlation `rho`, returned
/// as two single-column matrices.
pub fn bivariate_gaussian_samples(rho: f64, n: usize, seed: u64) -> Result<(Matrix, Matrix)> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Range(format!("correlation {rho} must lie in (-1, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (1.0 - rho * rho).sqrt();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        a.push(x);
        b.push(rho * x + c * e);
    }
    Ok((Matrix::new(n, 1, a)?, Matrix::new(n, 1, b)?))
}
