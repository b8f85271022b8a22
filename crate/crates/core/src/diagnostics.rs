//! Solution-quality metrics: KKT residuals, duality gap, marginal
//! deviations, the approximation bounds relating the regularized and exact
//! problems, support comparison and rate estimation over `γ` sweeps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::ExactOTResult;
use crate::problem::{dual_objective, dot, primal_objective, scaled_deviation, ProblemInstance, SolveResult, SolverConfig, TransportPlan};
use crate::solver::feasibility_error;

/// Entries at or below this value are not counted in supports.
pub const SUPPORT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    /// `max_i |∇φ(f_i) − γ(a_i − (P1)_i − c1_i)|`
    pub kkt_stationarity_f: f64,
    pub kkt_stationarity_g: f64,
    /// `Σ P_ij |C_ij − f_i − g_j| + Σ c1_i f_i + Σ c2_j g_j`
    pub complementary_slackness: f64,
    /// `|primal − dual|`, infinite when the dual is undefined.
    pub duality_gap: f64,
    pub feasibility_error: f64,
    /// `a − P1`
    pub marginal_dev_a: Vec<f64>,
    /// `b − Pᵀ1`
    pub marginal_dev_b: Vec<f64>,
    /// `Σ max(−(a − P1), 0)`
    pub mass_created: f64,
    /// `Σ max(a − P1, 0)`
    pub mass_destroyed: f64,
    pub mass_created_b: f64,
    pub mass_destroyed_b: f64,
    pub support_size: usize,
}

impl DiagnosticsReport {
    /// Largest residual among stationarity, slackness, gap and feasibility.
    pub fn max_residual(&self) -> f64 {
        self.kkt_stationarity_f
            .max(self.kkt_stationarity_g)
            .max(self.complementary_slackness)
            .max(self.duality_gap)
            .max(self.feasibility_error)
    }
}

fn deviation(w: &[f64], marginal: &[f64]) -> Vec<f64> {
    w.iter().zip(marginal).map(|(w, p)| w - p).collect()
}

fn created(dev: &[f64]) -> f64 {
    dev.iter().map(|d| (-d).max(0.0)).sum()
}

fn destroyed(dev: &[f64]) -> f64 {
    dev.iter().map(|d| d.max(0.0)).sum()
}

fn stationarity(grad: &[f64], target: &[f64]) -> f64 {
    grad.iter()
        .zip(target)
        .map(|(g, t)| (g - t).abs())
        .fold(0.0, |m, d| if d.is_nan() { f64::INFINITY } else { m.max(d) })
}

/// Fills every field of the report for `result` on `problem` (the cost
/// shift of `config` is applied first).
pub fn kkt_report(problem: &ProblemInstance, config: &SolverConfig, result: &SolveResult) -> DiagnosticsReport {
    let problem = config.effective_problem(problem);
    let pot = &result.potentials;
    let plan = &result.plan;
    let gamma = config.gamma;
    let rows = plan.row_sums();
    let cols = plan.col_sums();
    let (f, g) = (pot.f(), pot.g());

    let target_f = scaled_deviation(problem.a().weights(), &rows, pot.c1(), gamma);
    let target_g = scaled_deviation(problem.b().weights(), &cols, pot.c2(), gamma);

    let mut slackness: f64 = plan
        .entries()
        .iter()
        .map(|&(i, j, p)| p * (problem.cost().get(i, j) - f[i] - g[j]).abs())
        .sum();
    if let Some(c1) = pot.c1() {
        slackness += dot(c1, &f).abs();
    }
    if let Some(c2) = pot.c2() {
        slackness += dot(c2, &g).abs();
    }

    let primal = primal_objective(&problem, pot, gamma);
    let gap = dual_objective(&problem, plan, pot.phi(), pot.varphi(), gamma, pot.c1(), pot.c2())
        .map(|dual| (primal - dual).abs())
        .unwrap_or(f64::INFINITY);

    let dev_a = deviation(problem.a().weights(), &rows);
    let dev_b = deviation(problem.b().weights(), &cols);
    DiagnosticsReport {
        kkt_stationarity_f: stationarity(&pot.grad_f(), &target_f),
        kkt_stationarity_g: stationarity(&pot.grad_g(), &target_g),
        complementary_slackness: slackness,
        duality_gap: if gap.is_nan() { f64::INFINITY } else { gap },
        feasibility_error: feasibility_error(&f, &g, problem.cost(), gamma),
        mass_created: created(&dev_a),
        mass_destroyed: destroyed(&dev_a),
        mass_created_b: created(&dev_b),
        mass_destroyed_b: destroyed(&dev_b),
        marginal_dev_a: dev_a,
        marginal_dev_b: dev_b,
        support_size: plan.support_size(SUPPORT_TOL),
    }
}

/// One inequality `lhs ≤ rhs`. `margin = rhs − lhs`, so negative margins
/// are violations; `None` when a side is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub margin: Option<f64>,
    pub holds: Option<bool>,
}

impl BoundCheck {
    fn new(lhs: Option<f64>, rhs: Option<f64>, slack: f64) -> Self {
        let margin = lhs.zip(rhs).map(|(l, r)| r - l);
        BoundCheck {
            lhs,
            rhs,
            margin,
            holds: margin.map(|m| m >= -slack),
        }
    }
}

/// The approximation bounds between the regularized solution
/// `(f_γ, g_γ, P_γ)` and the exact solution `(f*, g*, P*)`:
///
/// 1. `φ(f_γ) + φ(g_γ) ≤ γ(OT − DROT) ≤ φ(f*) + φ(g*)`
/// 2. `γ⟨C, P* − P_γ⟩ ≤ φ(f*) + φ(g*) + φ*(γ(a − P_γ1)) + φ*(γ(b − P_γᵀ1))`
/// 3. `φ*(γ(a − P_γ1)) + φ*(γ(b − P_γᵀ1)) ≤ γ⟨C, P* − P_γ⟩ − φ(f_γ) − φ(g_γ)`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub objective_lower: BoundCheck,
    pub objective_upper: BoundCheck,
    pub cost_upper: BoundCheck,
    pub cost_lower: BoundCheck,
    /// `OT − DROT`
    pub objective_gap: f64,
    /// `|⟨C, P* − P_γ⟩|`
    pub cost_gap: f64,
    pub slack: f64,
    /// Every evaluated chain holds within `slack`.
    pub passed: bool,
}

/// Evaluates the three bound chains with slack `1e−8·γ`. `exact` must
/// solve the same (cost-shifted) instance as `drot`. A side involving
/// `φ(f*)` is undefined, and skipped, when `f*` leaves the domain of `φ`.
pub fn check_prop2_bounds(
    problem: &ProblemInstance,
    exact: &ExactOTResult,
    drot: &SolveResult,
    config: &SolverConfig,
) -> BoundsReport {
    let problem = config.effective_problem(problem);
    let gamma = config.gamma;
    let slack = 1e-8 * gamma;
    let pot = &drot.potentials;

    let reg_drot = pot.regularization();
    let reg_exact = config
        .phi
        .value(&exact.dual_f)
        .and_then(|x| Ok(x + config.varphi.value(&exact.dual_g)?))
        .ok();
    let drot_value = primal_objective(&problem, pot, gamma);
    let objective_gap = exact.cost - drot_value;

    let x = scaled_deviation(problem.a().weights(), &drot.plan.row_sums(), None, gamma);
    let y = scaled_deviation(problem.b().weights(), &drot.plan.col_sums(), None, gamma);
    let lenient = 1e-9 * gamma * problem.a().total().max(1.0);
    let conj = config
        .phi
        .conjugate_lenient(&x, lenient)
        .and_then(|u| Ok(u + config.varphi.conjugate_lenient(&y, lenient)?))
        .ok();
    let cost_diff = exact.cost - drot.plan.inner(problem.cost());

    let objective_lower = BoundCheck::new(Some(reg_drot), Some(gamma * objective_gap), slack);
    let objective_upper = BoundCheck::new(Some(gamma * objective_gap), reg_exact, slack);
    let cost_upper = BoundCheck::new(Some(gamma * cost_diff), reg_exact.zip(conj).map(|(r, c)| r + c), slack);
    let cost_lower = BoundCheck::new(conj, Some(gamma * cost_diff - reg_drot), slack);
    let passed = [&objective_lower, &objective_upper, &cost_upper, &cost_lower]
        .iter()
        .all(|c| c.holds != Some(false));
    BoundsReport {
        objective_lower,
        objective_upper,
        cost_upper,
        cost_lower,
        objective_gap,
        cost_gap: cost_diff.abs(),
        slack,
        passed,
    }
}

/// Least-squares slope of `log(error)` against `log(gamma)`.
pub fn rate_fit(gammas: &[f64], errors: &[f64]) -> Result<f64> {
    if gammas.len() != errors.len() {
        return Err(Error::DimensionMismatch {
            what: "rate fit",
            expected: gammas.len(),
            found: errors.len(),
        });
    }
    if gammas.len() < 3 {
        return Err(Error::InvalidConfig("rate fit needs at least 3 points".into()));
    }
    if let Some(v) = gammas.iter().chain(errors).find(|&&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidConfig(format!("rate fit needs positive values, got {v}")));
    }
    let xs: Vec<f64> = gammas.iter().map(|g| g.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidConfig("rate fit needs distinct gammas".into()));
    }
    Ok(sxy / sxx)
}

/// Whether every entry of `drot` above `tol` is also above `tol` in `exact`.
pub fn support_containment(drot: &TransportPlan, exact: &TransportPlan, tol: f64) -> Result<bool> {
    if drot.rows() != exact.rows() {
        return Err(Error::DimensionMismatch {
            what: "plan rows",
            expected: exact.rows(),
            found: drot.rows(),
        });
    }
    if drot.cols() != exact.cols() {
        return Err(Error::DimensionMismatch {
            what: "plan columns",
            expected: exact.cols(),
            found: drot.cols(),
        });
    }
    Ok(drot
        .entries()
        .iter()
        .filter(|e| e.2 > tol)
        .all(|&(i, j, _)| exact.get(i, j) > tol))
}
