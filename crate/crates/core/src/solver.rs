//! Active-set cyclic Bregman projections for the dual-regularized problem.
//!
//! Each sweep runs three steps:
//!
//! 1. the oracle scans every constraint `f_i + g_j ≤ C_ij` and returns the
//!    violated ones in row-major order;
//! 2. every violated constraint, then every retained active constraint in
//!    insertion order, is Bregman-projected with dual correction: the
//!    step is `c = min(P_ij, θ)`, `P_ij ← P_ij − c` and both potentials move
//!    along `∇φ(f'_i) = ∇φ(f_i) + γc`;
//! 3. constraints whose multiplier `P_ij` reached zero are forgotten.
//!
//! The invariant `∇φ(f) = γ(a − P·1)` (and its counterpart for `g`) holds
//! after every projection, so stationarity is exact up to rounding and the
//! plan `P` is the transport plan of the dual problem.

use std::collections::HashMap;

use crate::error::{Error, Result, ThetaError};
use crate::problem::{
    dual_objective, primal_objective, DualPotentials, ProblemInstance, SolveResult, SolverConfig,
    TransportPlan,
};
use crate::regularizer::{full_step, ProjectionStep, Regularizer};
use crate::scan::{scan, ScanMode};

/// Per-sweep observability record.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepStats {
    pub sweep: usize,
    pub violations_found: usize,
    /// Largest raw violation `f_i + g_j − C_ij`, clamped at zero.
    pub max_violation: f64,
    pub feasibility_error: f64,
    pub active_count: usize,
    pub primal_objective: f64,
}

/// Stationary point of the unconstrained objective, `∇φ(f⁰) = γa`,
/// `∇φ(g⁰) = γb`, with an empty plan.
pub fn initialize(problem: &ProblemInstance, config: &SolverConfig) -> Result<(DualPotentials, TransportPlan)> {
    config.validate(problem)?;
    let start = |reg: Regularizer, w: &[f64]| -> Result<Vec<f64>> {
        w.iter()
            .enumerate()
            .map(|(index, &wi)| {
                let y = config.gamma * wi;
                reg.coord_of_grad(y).ok_or(Error::Domain {
                    regularizer: reg,
                    index,
                    value: y,
                })
            })
            .collect()
    };
    let f = start(config.phi, problem.a().weights())?;
    let g = start(config.varphi, problem.b().weights())?;
    Ok((
        DualPotentials::from_coords(config.phi, config.varphi, f, g),
        TransportPlan::empty(problem.rows(), problem.cols()),
    ))
}

/// Raw violation threshold used by the oracle: a tenth of the stopping
/// tolerance, expressed in the units of `f_i + g_j − C_ij`.
fn oracle_threshold(config: &SolverConfig) -> f64 {
    2.0 * config.gamma * config.feasibility_tol / 10.0
}

/// All `(i, j)` with `f_i + g_j − C_ij > tol`, row-major.
pub fn oracle_scan(problem: &ProblemInstance, potentials: &DualPotentials, tol: f64) -> Vec<(usize, usize)> {
    scan(ScanMode::Parallel, &potentials.f(), &potentials.g(), problem.cost(), tol).violated
}

/// `max_{i,j} (f_i + g_j − C_ij)/(2γ)`, clamped below at zero.
pub fn feasibility_error(f: &[f64], g: &[f64], cost: &crate::problem::CostMatrix, gamma: f64) -> f64 {
    let worst = scan(ScanMode::Parallel, f, g, cost, f64::INFINITY).max_violation;
    (worst / (2.0 * gamma)).max(0.0)
}

/// Projects the coordinate pair onto `f_i + g_j = C_ij` with dual
/// correction; returns `(θ, c, P'_ij)`.
#[inline]
fn project_coords(
    config: &SolverConfig,
    f: &mut f64,
    g: &mut f64,
    p: f64,
    cost: f64,
) -> Result<(f64, f64, f64), ThetaError> {
    let step = full_step(config.phi, config.varphi, *f, *g, cost, config.gamma)?;
    if step.theta <= p {
        *f = step.f_coord;
        *g = step.g_coord;
        Ok((step.theta, step.theta, p - step.theta))
    } else {
        if p > 0.0 {
            let t = config.gamma * p;
            *f = config
                .phi
                .shift_coord(*f, t)
                .ok_or(ThetaError::NoRealSolution("relaxation step overflow"))?;
            *g = config
                .varphi
                .shift_coord(*g, t)
                .ok_or(ThetaError::NoRealSolution("relaxation step overflow"))?;
        }
        Ok((step.theta, p, 0.0))
    }
}

/// One Bregman projection of constraint `(i, j)`, updating the potentials
/// and the plan in place. The entry is forgotten when it reaches zero.
pub fn project_constraint(
    potentials: &mut DualPotentials,
    plan: &mut TransportPlan,
    i: usize,
    j: usize,
    cost_ij: f64,
    config: &SolverConfig,
) -> Result<ProjectionStep> {
    let p = plan.get(i, j);
    let (fs, gs) = potentials.coords_mut();
    let (theta, applied, new_p) = project_coords(config, &mut fs[i], &mut gs[j], p, cost_ij).map_err(|source| {
        Error::Projection {
            i,
            j,
            gamma: config.gamma,
            source,
        }
    })?;
    plan.set(i, j, new_p);
    Ok(ProjectionStep { i, j, theta, applied })
}

#[derive(Debug, Clone, Copy)]
struct ActiveEntry {
    i: usize,
    j: usize,
    p: f64,
}

/// Constraints under correction, in stable insertion order; every retained
/// entry has `P_ij > 0`.
#[derive(Debug, Default)]
struct ActiveSet {
    entries: Vec<ActiveEntry>,
    index: HashMap<(usize, usize), usize>,
}

impl ActiveSet {
    fn slot(&mut self, i: usize, j: usize) -> usize {
        *self.index.entry((i, j)).or_insert_with(|| {
            self.entries.push(ActiveEntry { i, j, p: 0.0 });
            self.entries.len() - 1
        })
    }

    /// Drops zero entries, keeping order.
    fn forget(&mut self) {
        let before = self.entries.len();
        self.entries.retain(|e| e.p > 0.0);
        if self.entries.len() != before {
            self.index.clear();
            for (k, e) in self.entries.iter().enumerate() {
                self.index.insert((e.i, e.j), k);
            }
        }
    }

    fn len(&self) -> usize {
        self.entries.len()
    }
}

/// Stateful solver; owns the working copy of the problem for one solve.
pub struct Solver {
    problem: ProblemInstance,
    config: SolverConfig,
    mode: ScanMode,
    f: Vec<f64>,
    g: Vec<f64>,
    active: ActiveSet,
}

impl Solver {
    pub fn new(problem: &ProblemInstance, config: &SolverConfig) -> Result<Self> {
        let (potentials, _) = initialize(problem, config)?;
        Ok(Solver {
            problem: config.effective_problem(problem),
            config: config.clone(),
            mode: ScanMode::default(),
            f: potentials.f_coords().to_vec(),
            g: potentials.g_coords().to_vec(),
            active: ActiveSet::default(),
        })
    }

    pub fn with_scan_mode(mut self, mode: ScanMode) -> Self {
        self.mode = mode;
        self
    }

    fn values(&self) -> (Vec<f64>, Vec<f64>) {
        let phi = self.config.phi;
        let varphi = self.config.varphi;
        (
            self.f.iter().map(|&x| phi.from_coord(x)).collect(),
            self.g.iter().map(|&x| varphi.from_coord(x)).collect(),
        )
    }

    /// Projects one active entry; returns the larger coordinate move.
    fn project_entry(&mut self, slot: usize) -> Result<f64> {
        let ActiveEntry { i, j, p } = self.active.entries[slot];
        let cost = self.problem.cost().get(i, j);
        let (f0, g0) = (self.f[i], self.g[j]);
        let (_, _, new_p) =
            project_coords(&self.config, &mut self.f[i], &mut self.g[j], p, cost).map_err(|source| {
                Error::Projection {
                    i,
                    j,
                    gamma: self.config.gamma,
                    source,
                }
            })?;
        self.active.entries[slot].p = new_p.max(0.0);
        Ok(coord_move(f0, self.f[i]).max(coord_move(g0, self.g[j])))
    }

    /// One pass over the violated and active constraints; returns the
    /// largest coordinate move of any single projection.
    fn sweep(&mut self, violated: &[(usize, usize)]) -> Result<f64> {
        let mut moved = 0.0f64;
        for &(i, j) in violated {
            let slot = self.active.slot(i, j);
            moved = moved.max(self.project_entry(slot)?);
        }
        for slot in 0..self.active.entries.len() {
            if self.active.entries[slot].p > 0.0 {
                moved = moved.max(self.project_entry(slot)?);
            }
        }
        // Entropy potentials live in log coordinates and stay strictly
        // positive, so the multipliers of f, g ≥ 0 remain at zero.
        self.active.forget();
        Ok(moved)
    }

    fn potentials(&self) -> DualPotentials {
        DualPotentials::from_coords(self.config.phi, self.config.varphi, self.f.clone(), self.g.clone())
    }

    /// Runs sweeps until the feasibility error and the largest single
    /// projection move of the last sweep are both within `feasibility_tol`,
    /// or `max_sweeps`. Comparing potentials between sweeps is not enough:
    /// a sweep can return them to where it started while mass still
    /// drains out of a slack constraint.
    pub fn run(mut self, mut observer: impl FnMut(&SweepStats)) -> Result<SolveResult> {
        let tol = self.config.feasibility_tol;
        let gamma = self.config.gamma;
        let threshold = oracle_threshold(&self.config);
        let mut change = f64::INFINITY;
        let mut sweeps = 0;
        let (converged, feasibility) = loop {
            let (f, g) = self.values();
            let outcome = scan(self.mode, &f, &g, self.problem.cost(), threshold);
            let feasibility = (outcome.max_violation / (2.0 * gamma)).max(0.0);
            observer(&SweepStats {
                sweep: sweeps,
                violations_found: outcome.violated.len(),
                max_violation: outcome.max_violation.max(0.0),
                feasibility_error: feasibility,
                active_count: self.active.len(),
                primal_objective: primal_objective(&self.problem, &self.potentials(), gamma),
            });
            if feasibility <= tol && change <= tol {
                break (true, feasibility);
            }
            if sweeps >= self.config.max_sweeps {
                break (false, feasibility);
            }
            change = self.sweep(&outcome.violated)?;
            sweeps += 1;
        };

        let potentials = self.potentials();
        let entries = self
            .active
            .entries
            .iter()
            .filter(|e| e.p > 0.0)
            .map(|e| (e.i, e.j, e.p))
            .collect();
        let plan = TransportPlan::from_entries(self.problem.rows(), self.problem.cols(), entries)?.sorted();
        let primal = primal_objective(&self.problem, &potentials, gamma);
        let dual = dual_objective(
            &self.problem,
            &plan,
            self.config.phi,
            self.config.varphi,
            gamma,
            potentials.c1(),
            potentials.c2(),
        )
        .unwrap_or(f64::NAN);
        Ok(SolveResult {
            potentials,
            plan,
            primal_objective: primal,
            dual_objective: dual,
            feasibility_error: feasibility,
            sweeps,
            converged,
        })
    }
}

fn coord_move(before: f64, after: f64) -> f64 {
    if before == after {
        0.0
    } else {
        let d = (after - before).abs();
        if d.is_nan() { f64::INFINITY } else { d }
    }
}

/// Solves the dual-regularized problem. Non-convergence within
/// `max_sweeps` is reported through `converged = false`.
pub fn solve(problem: &ProblemInstance, config: &SolverConfig) -> Result<SolveResult> {
    Solver::new(problem, config)?.run(|_| {})
}

pub fn solve_with_mode(problem: &ProblemInstance, config: &SolverConfig, mode: ScanMode) -> Result<SolveResult> {
    Solver::new(problem, config)?.with_scan_mode(mode).run(|_| {})
}
