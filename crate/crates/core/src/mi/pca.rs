//! Maximum-variance (equivalently, for Gaussian data, maximum-MI) unit projection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{dot, l2_norm, Matrix};

/// Relative eigen-gap at or below which the top direction is reported as a tie.
pub const TIE_TOLERANCE: f64 = 1e-9;

const MAX_ITERATIONS: usize = 1_000_000;
const CONVERGENCE: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearDirection {
    /// Unit vector maximizing `wᵀΣ̂w`.
    pub direction: Vec<f64>,
    /// Projected variance `wᵀΣ̂w`.
    pub variance: f64,
    /// Largest variance achievable orthogonally to `direction`.
    pub runner_up: f64,
    /// Top two variances coincide; any vector in their span is optimal.
    pub is_tie: bool,
    pub iterations: usize,
}

fn quad(cov: &Matrix, w: &[f64]) -> f64 {
    let sw: Vec<f64> = cov.row_iter().map(|r| dot(r, w)).collect();
    dot(w, &sw)
}

/// Projected gradient ascent on `wᵀΣw` over the unit sphere.
fn ascend(cov: &Matrix, mut w: Vec<f64>) -> (Vec<f64>, f64, usize) {
    let d = w.len();
    let mut rayleigh = quad(cov, &w);
    let mut it = 0;
    while it < MAX_ITERATIONS {
        it += 1;
        if !(rayleigh > 0.0) {
            break;
        }
        // gradient 2Σw, step 5/ρ
        let step = 5.0 / rayleigh;
        let mut next: Vec<f64> = (0..d).map(|i| w[i] + step * 2.0 * dot(cov.row(i), &w)).collect();
        let norm = l2_norm(&next);
        next.iter_mut().for_each(|v| *v /= norm);
        let change = next.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        w = next;
        rayleigh = quad(cov, &w);
        if change < CONVERGENCE {
            break;
        }
    }
    (w, rayleigh, it)
}

/// Finds the unit projection of `data` (rows are samples) with maximum variance.
pub fn max_mi_linear_direction(data: &Matrix, seed: u64) -> Result<LinearDirection> {
    if data.rows() < 2 {
        return Err(Error::Data("need at least two samples".into()));
    }
    let d = data.cols();
    if d == 0 {
        return Err(Error::Degenerate("data has no columns".into()));
    }
    let cov = data.covariance();
    let trace: f64 = (0..d).map(|i| cov[(i, i)]).sum();
    if !(trace > f64::MIN_POSITIVE) {
        return Err(Error::Degenerate("sample covariance has rank zero".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let n = l2_norm(&init);
    init.iter_mut().for_each(|v| *v /= n);
    let (w, variance, iterations) = ascend(&cov, init);

    // deflate and ascend again for the second eigenvalue
    let deflated = Matrix::from_fn(d, d, |i, j| cov[(i, j)] - variance * w[i] * w[j]);
    let runner_up = if d > 1 {
        let mut start: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let proj = dot(&start, &w);
        start.iter_mut().zip(&w).for_each(|(s, wi)| *s -= proj * wi);
        let sn = l2_norm(&start);
        start.iter_mut().for_each(|v| *v /= sn);
        ascend(&deflated, start).1.max(0.0)
    } else {
        0.0
    };
    let is_tie = d > 1 && variance - runner_up <= TIE_TOLERANCE * variance.max(f64::MIN_POSITIVE);
    Ok(LinearDirection {
        direction: w,
        variance,
        runner_up,
        is_tie,
        iterations,
    })
}
