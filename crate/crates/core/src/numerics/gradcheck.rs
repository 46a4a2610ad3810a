//! Central finite-difference gradient checking.

/// Relative errors are computed as `|a − n| / max(|a|, |n|, ABS_FLOOR)` so that
/// entries whose true gradient is ~0 are judged on absolute error.
pub const ABS_FLOOR: f64 = 1e-6;

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub rel_errors: Vec<f64>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.rel_errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn worst_index(&self) -> Option<usize> {
        self.rel_errors
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
    }

    /// Indices whose relative error exceeds the tolerance (or is NaN).
    pub fn failures(&self) -> Vec<usize> {
        self.rel_errors
            .iter()
            .enumerate()
            .filter(|(_, e)| !(**e <= self.tolerance))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    /// Max relative error per named tensor, given `(name, len)` in flat order.
    pub fn per_tensor(&self, layout: &[(String, usize)]) -> Vec<(String, f64)> {
        let mut offset = 0;
        layout
            .iter()
            .map(|(name, len)| {
                let end = (offset + len).min(self.rel_errors.len());
                let m = self.rel_errors[offset..end].iter().copied().fold(0.0, f64::max);
                offset = end;
                (name.clone(), m)
            })
            .collect()
    }
}

/// Compares the analytic gradient returned by `loss_fn` at `params` against
/// central differences `(L(p + h·eᵢ) − L(p − h·eᵢ)) / 2h` for every coordinate.
pub fn finite_diff_check<F>(mut loss_fn: F, params: &[f64], step: f64, tolerance: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = loss_fn(params);
    assert_eq!(analytic.len(), params.len(), "gradient length must match parameters");
    let mut probe = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let plus = loss_fn(&probe).0;
        probe[i] = orig - step;
        let minus = loss_fn(&probe).0;
        probe[i] = orig;
        numeric.push((plus - minus) / (2.0 * step));
    }
    let rel_errors = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(ABS_FLOOR))
        .collect();
    GradCheckReport {
        analytic,
        numeric,
        rel_errors,
        tolerance,
    }
}
