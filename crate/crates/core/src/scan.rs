//! Violated-constraint oracle. Every constraint `f_i + g_j ≤ C_ij` is
//! checked independently, so rows can be scanned by concurrent workers;
//! results are merged back in row-major order and are identical to the
//! sequential scan.

use crate::problem::CostMatrix;

/// Result of one full pass over the constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutcome {
    /// Row-major list of constraints with `f_i + g_j − C_ij > threshold`.
    pub violated: Vec<(usize, usize)>,
    /// `max_{i,j} (f_i + g_j − C_ij)`, unclamped.
    pub max_violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScanMode {
    Sequential,
    /// Falls back to sequential when the `parallel` feature is disabled.
    #[default]
    Parallel,
}

fn scan_row(i: usize, fi: f64, g: &[f64], row: &[f64], threshold: f64, out: &mut Vec<(usize, usize)>) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for (j, (&gj, &c)) in g.iter().zip(row).enumerate() {
        let v = fi + gj - c;
        if v > threshold {
            out.push((i, j));
        }
        if v > worst || v.is_nan() {
            worst = if v.is_nan() { f64::INFINITY } else { v };
        }
    }
    worst
}

pub fn scan_sequential(f: &[f64], g: &[f64], cost: &CostMatrix, threshold: f64) -> ScanOutcome {
    let mut violated = Vec::new();
    let mut max_violation = f64::NEG_INFINITY;
    for (i, &fi) in f.iter().enumerate() {
        max_violation = max_violation.max(scan_row(i, fi, g, cost.row(i), threshold, &mut violated));
    }
    ScanOutcome {
        violated,
        max_violation,
    }
}

#[cfg(feature = "parallel")]
pub fn scan_parallel(f: &[f64], g: &[f64], cost: &CostMatrix, threshold: f64) -> ScanOutcome {
    use rayon::prelude::*;

    // Small problems are not worth the fork/join overhead.
    if f.len() * g.len() < 16_384 {
        return scan_sequential(f, g, cost, threshold);
    }
    let rows_per_task = (16_384 / g.len().max(1)).max(1);
    let parts: Vec<(Vec<(usize, usize)>, f64)> = f
        .par_chunks(rows_per_task)
        .enumerate()
        .map(|(chunk, fs)| {
            let mut out = Vec::new();
            let mut worst = f64::NEG_INFINITY;
            for (k, &fi) in fs.iter().enumerate() {
                let i = chunk * rows_per_task + k;
                worst = worst.max(scan_row(i, fi, g, cost.row(i), threshold, &mut out));
            }
            (out, worst)
        })
        .collect();
    let mut violated = Vec::with_capacity(parts.iter().map(|p| p.0.len()).sum());
    let mut max_violation = f64::NEG_INFINITY;
    for (part, worst) in parts {
        violated.extend(part);
        max_violation = max_violation.max(worst);
    }
    ScanOutcome {
        violated,
        max_violation,
    }
}

#[cfg(not(feature = "parallel"))]
pub fn scan_parallel(f: &[f64], g: &[f64], cost: &CostMatrix, threshold: f64) -> ScanOutcome {
    scan_sequential(f, g, cost, threshold)
}

pub fn scan(mode: ScanMode, f: &[f64], g: &[f64], cost: &CostMatrix, threshold: f64) -> ScanOutcome {
    match mode {
        ScanMode::Sequential => scan_sequential(f, g, cost, threshold),
        ScanMode::Parallel => scan_parallel(f, g, cost, threshold),
    }
}
