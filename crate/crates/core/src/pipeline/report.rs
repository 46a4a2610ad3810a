//! Summaries of trajectory tables: peak transfer, final gap, run deltas.

use std::fmt::Write;

use super::trajectory::TrajectoryTable;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSummary {
    pub target: String,
    pub peak_epoch: usize,
    pub peak: f64,
    pub final_epoch: usize,
    pub final_accuracy: f64,
}

impl TargetSummary {
    /// Peak minus final accuracy (non-negative by construction).
    pub fn gap(&self) -> f64 {
        self.peak - self.final_accuracy
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub evaluated_epochs: usize,
    pub targets: Vec<TargetSummary>,
    pub final_r_at_1: Option<f64>,
    pub final_nmi: Option<f64>,
}

/// `None` when the table has no evaluated rows.
pub fn summarize(table: &TrajectoryTable) -> Option<RunSummary> {
    if table.rows.is_empty() {
        return None;
    }
    let epoch_col = 0;
    let last = table.rows.last()?;
    let mut targets = Vec::new();
    for (col, name) in table.probe_columns() {
        let series: Vec<(usize, f64)> = table
            .rows
            .iter()
            .filter_map(|r| Some((r[epoch_col]? as usize, r[col]?)))
            .collect();
        let Some(&(final_epoch, final_accuracy)) = series.last() else {
            continue;
        };
        // earliest epoch attaining the maximum
        let (peak_epoch, peak) = series
            .iter()
            .copied()
            .fold((final_epoch, f64::NEG_INFINITY), |best, (e, v)| if v > best.1 { (e, v) } else { best });
        targets.push(TargetSummary {
            target: name.to_string(),
            peak_epoch,
            peak,
            final_epoch,
            final_accuracy,
        });
    }
    let col = |name: &str| table.column(name).and_then(|c| last[c]);
    Some(RunSummary {
        evaluated_epochs: table.rows.len(),
        targets,
        final_r_at_1: col("r_at_1"),
        final_nmi: col("nmi"),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

pub fn format_summary(label: &str, s: &RunSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{label}: {} evaluated epochs", s.evaluated_epochs);
    for t in &s.targets {
        let _ = writeln!(
            out,
            "  {}: peak {:.4} at epoch {}, final {:.4} at epoch {}, gap {:.4}",
            t.target, t.peak, t.peak_epoch, t.final_accuracy, t.final_epoch, t.gap()
        );
    }
    let _ = writeln!(out, "  final R@1 {}, final NMI {}", fmt_opt(s.final_r_at_1), fmt_opt(s.final_nmi));
    out
}

fn signed(v: f64) -> String {
    format!("{v:+.4}")
}

/// Second run minus first run, per shared target and for the final metrics.
pub fn format_comparison(labels: (&str, &str), a: &RunSummary, b: &RunSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "delta ({} - {}):", labels.1, labels.0);
    let _ = writeln!(out, "  {:<16}{:>12}{:>12}{:>12}", "quantity", labels.0, labels.1, "delta");
    for ta in &a.targets {
        if let Some(tb) = b.targets.iter().find(|t| t.target == ta.target) {
            for (what, va, vb) in [
                ("final", ta.final_accuracy, tb.final_accuracy),
                ("peak", ta.peak, tb.peak),
                ("gap", ta.gap(), tb.gap()),
            ] {
                let name = format!("{what}_{}", ta.target);
                let _ = writeln!(out, "  {name:<16}{va:>12.4}{vb:>12.4}{:>12}", signed(vb - va));
            }
        }
    }
    for (name, va, vb) in [("r_at_1", a.final_r_at_1, b.final_r_at_1), ("nmi", a.final_nmi, b.final_nmi)] {
        let d = match (va, vb) {
            (Some(x), Some(y)) => signed(y - x),
            _ => "-".into(),
        };
        let _ = writeln!(out, "  {name:<16}{:>12}{:>12}{d:>12}", fmt_opt(va), fmt_opt(vb));
    }
    out
}
