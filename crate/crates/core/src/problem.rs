//! Problem and solution data model: measures, costs, plans, potentials,
//! solver configuration and results.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regularizer::Regularizer;

/// Nonnegative weights over atoms. Total mass is not normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Measure(Vec<f64>);

impl Measure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        for (index, &w) in weights.iter().enumerate() {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidWeight { index, value: w });
            }
        }
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::ZeroMass);
        }
        Ok(Measure(weights))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl TryFrom<Vec<f64>> for Measure {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Measure::new(v)
    }
}

impl From<Measure> for Vec<f64> {
    fn from(m: Measure) -> Self {
        m.0
    }
}

/// Dense row-major `m × n` cost matrix with finite nonnegative entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "cost entries",
                expected: rows * cols,
                found: data.len(),
            });
        }
        for (k, &c) in data.iter().enumerate() {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::InvalidCost {
                    row: k / cols.max(1),
                    col: k % cols.max(1),
                    value: c,
                });
            }
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    what: "cost row length",
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        CostMatrix::new(rows.len(), cols, data)
    }

    /// Same shape, every entry `value`.
    pub fn constant(rows: usize, cols: usize, value: f64) -> Result<Self> {
        CostMatrix::new(rows, cols, vec![value; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn transpose(&self) -> CostMatrix {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        CostMatrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn shifted(&self, shift: f64) -> CostMatrix {
        CostMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|c| c + shift).collect(),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

/// `C_ij = Σ_k (x_i[k] − y_j[k])²`.
pub fn sqeuclidean_cost<P: AsRef<[f64]>>(x: &[P], y: &[P]) -> Result<CostMatrix> {
    let dim = x
        .first()
        .or_else(|| y.first())
        .map_or(0, |p| p.as_ref().len());
    for (index, p) in x.iter().chain(y.iter()).enumerate() {
        if p.as_ref().len() != dim {
            return Err(Error::MixedDimensions {
                index,
                expected: dim,
                found: p.as_ref().len(),
            });
        }
    }
    let mut data = Vec::with_capacity(x.len() * y.len());
    for p in x {
        for q in y {
            data.push(
                p.as_ref()
                    .iter()
                    .zip(q.as_ref())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum(),
            );
        }
    }
    CostMatrix::new(x.len(), y.len(), data)
}

/// Validated `(a, b, C)` bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    a: Measure,
    b: Measure,
    cost: CostMatrix,
}

impl ProblemInstance {
    /// Rejects shape mismatches and zero-weight atoms. Measures are kept as
    /// given, unbalanced totals included.
    pub fn new(a: Measure, b: Measure, cost: CostMatrix) -> Result<Self> {
        if cost.rows() != a.len() {
            return Err(Error::DimensionMismatch {
                what: "cost rows vs len(a)",
                expected: a.len(),
                found: cost.rows(),
            });
        }
        if cost.cols() != b.len() {
            return Err(Error::DimensionMismatch {
                what: "cost cols vs len(b)",
                expected: b.len(),
                found: cost.cols(),
            });
        }
        for (which, m) in [("a", &a), ("b", &b)] {
            if let Some(index) = m.weights().iter().position(|&w| w == 0.0) {
                return Err(Error::ZeroWeightAtom { which, index });
            }
        }
        Ok(ProblemInstance { a, b, cost })
    }

    pub fn a(&self) -> &Measure {
        &self.a
    }

    pub fn b(&self) -> &Measure {
        &self.b
    }

    pub fn cost(&self) -> &CostMatrix {
        &self.cost
    }

    pub fn rows(&self) -> usize {
        self.a.len()
    }

    pub fn cols(&self) -> usize {
        self.b.len()
    }

    pub fn with_cost(&self, cost: CostMatrix) -> Result<Self> {
        ProblemInstance::new(self.a.clone(), self.b.clone(), cost)
    }

    pub fn is_balanced(&self, tol: f64) -> bool {
        (self.a.total() - self.b.total()).abs() <= tol
    }
}

/// Two Gaussian densities with means `mean1`, `mean2` and the given variance,
/// evaluated at `n` equidistant points of `[lo, hi]` and normalized to unit
/// mass; cost is the squared distance between grid points.
pub fn gaussian_instance(
    n: usize,
    mean1: f64,
    mean2: f64,
    variance: f64,
    lo: f64,
    hi: f64,
) -> Result<ProblemInstance> {
    if n < 2 {
        return Err(Error::InvalidGrid(format!("need at least 2 points, got {n}")));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidGrid(format!("empty interval [{lo}, {hi}]")));
    }
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::InvalidGrid(format!("variance must be positive, got {variance}")));
    }
    let grid = grid_points(n, lo, hi);
    let density = |mean: f64| -> Result<Measure> {
        let raw: Vec<f64> = grid
            .iter()
            .map(|&x| (-(x - mean) * (x - mean) / (2.0 * variance)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidGrid("density underflows on every grid point".into()));
        }
        Measure::new(raw.into_iter().map(|w| w / total).collect())
    };
    let points: Vec<[f64; 1]> = grid.iter().map(|&x| [x]).collect();
    let cost = sqeuclidean_cost(&points, &points)?;
    ProblemInstance::new(density(mean1)?, density(mean2)?, cost)
}

pub(crate) fn grid_points(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|k| if k == n - 1 { hi } else { lo + step * k as f64 })
        .collect()
}

/// Sparse nonnegative plan stored as coordinate triplets; only strictly
/// positive values are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TransportPlan {
    pub fn empty(rows: usize, cols: usize) -> Self {
        TransportPlan {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn from_entries(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for &(i, j, v) in &entries {
            if i >= rows || j >= cols {
                return Err(Error::InvalidPlan(format!(
                    "entry ({i}, {j}) out of range for {rows}x{cols}"
                )));
            }
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidPlan(format!(
                    "entry ({i}, {j}) has non-positive value {v}"
                )));
            }
            if !seen.insert((i, j)) {
                return Err(Error::InvalidPlan(format!("duplicate entry ({i}, {j})")));
            }
        }
        Ok(TransportPlan {
            rows,
            cols,
            entries,
        })
    }

    /// Drops non-positive values instead of rejecting them.
    pub fn from_dense(rows: usize, cols: usize, dense: &[f64]) -> Self {
        let entries = dense
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(k, &v)| (k / cols, k % cols, v))
            .collect();
        TransportPlan {
            rows,
            cols,
            entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Number of entries strictly above `tol`.
    pub fn support_size(&self, tol: f64) -> usize {
        self.entries.iter().filter(|e| e.2 > tol).count()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries
            .iter()
            .find(|e| e.0 == i && e.1 == j)
            .map_or(0.0, |e| e.2)
    }

    /// `P·1`
    pub fn row_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for &(i, _, v) in &self.entries {
            out[i] += v;
        }
        out
    }

    /// `Pᵀ·1`
    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for &(_, j, v) in &self.entries {
            out[j] += v;
        }
        out
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    /// `⟨C, P⟩`
    pub fn inner(&self, cost: &CostMatrix) -> f64 {
        self.entries.iter().map(|&(i, j, v)| cost.get(i, j) * v).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for &(i, j, v) in &self.entries {
            out[i * self.cols + j] = v;
        }
        out
    }

    /// Sets `P_ij`, forgetting the entry when `value ≤ 0`.
    pub(crate) fn set(&mut self, i: usize, j: usize, value: f64) {
        let pos = self.entries.iter().position(|e| e.0 == i && e.1 == j);
        match (pos, value > 0.0) {
            (Some(k), true) => self.entries[k].2 = value,
            (Some(k), false) => {
                self.entries.remove(k);
            }
            (None, true) => self.entries.push((i, j, value)),
            (None, false) => {}
        }
    }

    /// Row-major canonical order.
    pub fn sorted(mut self) -> Self {
        self.entries.sort_by_key(|e| (e.0, e.1));
        self
    }

    pub fn scaled(&self, factor: f64) -> Self {
        TransportPlan {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .map(|&(i, j, v)| (i, j, v * factor))
                .filter(|e| e.2 > 0.0)
                .collect(),
        }
    }
}

/// Dual potentials `(f, g)`, stored in regularizer coordinates so that the
/// entropy potential (held as `log f`) never overflows; values are produced
/// on demand. `c1`/`c2` are the multipliers of `f, g ≥ 0` and exist exactly
/// when the corresponding regularizer is entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentials {
    phi: Regularizer,
    varphi: Regularizer,
    f_coord: Vec<f64>,
    g_coord: Vec<f64>,
    c1: Option<Vec<f64>>,
    c2: Option<Vec<f64>>,
}

impl DualPotentials {
    /// Builds from potential values; entropy potentials must be positive.
    pub fn from_values(phi: Regularizer, varphi: Regularizer, f: &[f64], g: &[f64]) -> Result<Self> {
        let to = |reg: Regularizer, v: &[f64]| -> Result<Vec<f64>> {
            v.iter()
                .enumerate()
                .map(|(index, &x)| {
                    reg.to_coord(x).ok_or(Error::Domain {
                        regularizer: reg,
                        index,
                        value: x,
                    })
                })
                .collect()
        };
        Ok(DualPotentials::from_coords(phi, varphi, to(phi, f)?, to(varphi, g)?))
    }

    pub fn from_coords(phi: Regularizer, varphi: Regularizer, f_coord: Vec<f64>, g_coord: Vec<f64>) -> Self {
        let c1 = (phi == Regularizer::Entropy).then(|| vec![0.0; f_coord.len()]);
        let c2 = (varphi == Regularizer::Entropy).then(|| vec![0.0; g_coord.len()]);
        DualPotentials {
            phi,
            varphi,
            f_coord,
            g_coord,
            c1,
            c2,
        }
    }

    pub fn with_nonnegativity_duals(mut self, c1: Option<Vec<f64>>, c2: Option<Vec<f64>>) -> Result<Self> {
        for (reg, c, len, name) in [
            (self.phi, &c1, self.f_coord.len(), "c1"),
            (self.varphi, &c2, self.g_coord.len(), "c2"),
        ] {
            match c {
                Some(v) if reg != Regularizer::Entropy => {
                    let _ = v;
                    return Err(Error::InvalidConfig(format!("{name} given for {reg} regularizer")));
                }
                Some(v) => {
                    if v.len() != len {
                        return Err(Error::DimensionMismatch {
                            what: "nonnegativity duals",
                            expected: len,
                            found: v.len(),
                        });
                    }
                    if v.iter().any(|&x| !(x >= 0.0)) {
                        return Err(Error::InvalidConfig(format!("{name} must be nonnegative")));
                    }
                }
                None => {}
            }
        }
        if c1.is_some() {
            self.c1 = c1;
        }
        if c2.is_some() {
            self.c2 = c2;
        }
        Ok(self)
    }

    pub fn phi(&self) -> Regularizer {
        self.phi
    }

    pub fn varphi(&self) -> Regularizer {
        self.varphi
    }

    pub fn f(&self) -> Vec<f64> {
        self.f_coord.iter().map(|&x| self.phi.from_coord(x)).collect()
    }

    pub fn g(&self) -> Vec<f64> {
        self.g_coord.iter().map(|&x| self.varphi.from_coord(x)).collect()
    }

    pub fn f_coords(&self) -> &[f64] {
        &self.f_coord
    }

    pub fn g_coords(&self) -> &[f64] {
        &self.g_coord
    }

    /// `∇φ(f)`
    pub fn grad_f(&self) -> Vec<f64> {
        self.f_coord.iter().map(|&x| self.phi.grad_of_coord(x)).collect()
    }

    /// `∇φ(g)`
    pub fn grad_g(&self) -> Vec<f64> {
        self.g_coord.iter().map(|&x| self.varphi.grad_of_coord(x)).collect()
    }

    /// `φ(f) + φ(g)`
    pub fn regularization(&self) -> f64 {
        self.f_coord.iter().map(|&x| self.phi.value_of_coord(x)).sum::<f64>()
            + self.g_coord.iter().map(|&x| self.varphi.value_of_coord(x)).sum::<f64>()
    }

    pub(crate) fn coords_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.f_coord, &mut self.g_coord)
    }

    pub fn c1(&self) -> Option<&[f64]> {
        self.c1.as_deref()
    }

    pub fn c2(&self) -> Option<&[f64]> {
        self.c2.as_deref()
    }
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub gamma: f64,
    pub phi: Regularizer,
    pub varphi: Regularizer,
    pub feasibility_tol: f64,
    pub max_sweeps: usize,
    /// Added to every cost entry when either regularizer is entropy.
    pub cost_shift: f64,
}

impl SolverConfig {
    pub const DEFAULT_TOL: f64 = 1e-8;
    pub const DEFAULT_MAX_SWEEPS: usize = 100_000;

    pub fn new(gamma: f64, phi: Regularizer, varphi: Regularizer) -> Self {
        SolverConfig {
            gamma,
            phi,
            varphi,
            feasibility_tol: Self::DEFAULT_TOL,
            max_sweeps: Self::DEFAULT_MAX_SWEEPS,
            cost_shift: 0.0,
        }
    }

    /// Same regularizer on both sides.
    pub fn symmetric(gamma: f64, reg: Regularizer) -> Self {
        Self::new(gamma, reg, reg)
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.feasibility_tol = tol;
        self
    }

    pub fn with_max_sweeps(mut self, sweeps: usize) -> Self {
        self.max_sweeps = sweeps;
        self
    }

    pub fn with_cost_shift(mut self, shift: f64) -> Self {
        self.cost_shift = shift;
        self
    }

    pub fn uses_entropy(&self) -> bool {
        self.phi == Regularizer::Entropy || self.varphi == Regularizer::Entropy
    }

    /// Shift actually applied to the cost.
    pub fn effective_shift(&self) -> f64 {
        if self.uses_entropy() {
            self.cost_shift
        } else {
            0.0
        }
    }

    pub fn validate(&self, problem: &ProblemInstance) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidConfig(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.feasibility_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "feasibility_tol must be positive, got {}",
                self.feasibility_tol
            )));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidConfig("max_sweeps must be positive".into()));
        }
        if !(self.cost_shift >= 0.0) || !self.cost_shift.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "cost_shift must be nonnegative, got {}",
                self.cost_shift
            )));
        }
        if self.uses_entropy() && problem.cost().min() + self.cost_shift <= 0.0 {
            return Err(Error::InvalidConfig(
                "entropy regularizer needs strictly positive costs: set cost_shift > 0".into(),
            ));
        }
        Ok(())
    }

    /// The instance the solver actually works on (cost shifted for entropy).
    pub fn effective_problem(&self, problem: &ProblemInstance) -> ProblemInstance {
        let shift = self.effective_shift();
        if shift == 0.0 {
            problem.clone()
        } else {
            ProblemInstance {
                a: problem.a.clone(),
                b: problem.b.clone(),
                cost: problem.cost.shifted(shift),
            }
        }
    }
}

/// Output of a DROT solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub potentials: DualPotentials,
    pub plan: TransportPlan,
    /// `⟨f,a⟩ + ⟨g,b⟩ − (φ(f) + φ(g))/γ`
    pub primal_objective: f64,
    /// `⟨C,P⟩ + φ*(γ(a − P1))/γ + φ*(γ(b − Pᵀ1))/γ`
    pub dual_objective: f64,
    pub feasibility_error: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// DROT objective of potentials on an (effective) problem.
pub fn primal_objective(problem: &ProblemInstance, potentials: &DualPotentials, gamma: f64) -> f64 {
    let f = potentials.f();
    let g = potentials.g();
    dot(&f, problem.a().weights()) + dot(&g, problem.b().weights()) - potentials.regularization() / gamma
}

/// Dual (unbalanced transport) objective of a plan on an (effective) problem.
pub fn dual_objective(
    problem: &ProblemInstance,
    plan: &TransportPlan,
    phi: Regularizer,
    varphi: Regularizer,
    gamma: f64,
    c1: Option<&[f64]>,
    c2: Option<&[f64]>,
) -> Result<f64> {
    let x = scaled_deviation(problem.a().weights(), &plan.row_sums(), c1, gamma);
    let y = scaled_deviation(problem.b().weights(), &plan.col_sums(), c2, gamma);
    let slack_x = 1e-9 * gamma * problem.a().total().max(1.0);
    let slack_y = 1e-9 * gamma * problem.b().total().max(1.0);
    Ok(plan.inner(problem.cost())
        + phi.conjugate_lenient(&x, slack_x)? / gamma
        + varphi.conjugate_lenient(&y, slack_y)? / gamma)
}

/// `γ(w − marginal − c)`
pub(crate) fn scaled_deviation(w: &[f64], marginal: &[f64], c: Option<&[f64]>, gamma: f64) -> Vec<f64> {
    w.iter()
        .zip(marginal)
        .enumerate()
        .map(|(k, (w, p))| gamma * (w - p - c.map_or(0.0, |c| c[k])))
        .collect()
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
