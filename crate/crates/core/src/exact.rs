//! Reference solvers.
//!
//! [`solve_exact_ot`] solves the balanced transportation LP with the
//! transportation simplex (network simplex on the complete bipartite
//! graph): northwest-corner start, Bland's rule for entering and leaving
//! cells. The optimal basis gives a vertex plan and dual potentials
//! normalized by `f_0 = 0`.
//!
//! [`solve_drot_dense_oracle`] minimizes the regularized dual over dense
//! plans by projected gradient descent, independently of the active-set
//! solver.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::problem::{dual_objective, primal_objective, DualPotentials, ProblemInstance, SolveResult, SolverConfig, TransportPlan};
use crate::regularizer::Regularizer;
use crate::solver::feasibility_error;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactOTResult {
    pub plan: TransportPlan,
    /// `OT(a, b) = ⟨C, P*⟩`
    pub cost: f64,
    pub dual_f: Vec<f64>,
    pub dual_g: Vec<f64>,
    pub pivots: usize,
}

struct Basis {
    m: usize,
    n: usize,
    flow: Vec<f64>,
    basic: Vec<bool>,
    /// Node adjacency of the spanning tree; rows are `0..m`, columns `m..m+n`.
    adj: Vec<Vec<usize>>,
}

impl Basis {
    fn northwest_corner(a: &[f64], b: &[f64]) -> Self {
        let (m, n) = (a.len(), b.len());
        let mut basis = Basis {
            m,
            n,
            flow: vec![0.0; m * n],
            basic: vec![false; m * n],
            adj: vec![Vec::new(); m + n],
        };
        let mut ra = a.to_vec();
        let mut rb = b.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let x = ra[i].min(rb[j]).max(0.0);
            ra[i] -= x;
            rb[j] -= x;
            basis.insert(i, j, x);
            if i == m - 1 && j == n - 1 {
                break;
            }
            if i == m - 1 {
                j += 1;
            } else if j == n - 1 || ra[i] <= rb[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        basis
    }

    fn insert(&mut self, i: usize, j: usize, x: f64) {
        let k = i * self.n + j;
        self.basic[k] = true;
        self.flow[k] = x;
        self.adj[i].push(self.m + j);
        self.adj[self.m + j].push(i);
    }

    fn remove(&mut self, i: usize, j: usize) {
        let k = i * self.n + j;
        self.basic[k] = false;
        self.flow[k] = 0.0;
        let col = self.m + j;
        self.adj[i].retain(|&x| x != col);
        self.adj[col].retain(|&x| x != i);
    }

    fn potentials(&self, cost: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (m, n) = (self.m, self.n);
        let mut pot = vec![f64::NAN; m + n];
        pot[0] = 0.0;
        let mut queue = VecDeque::from([0]);
        while let Some(node) = queue.pop_front() {
            for &next in &self.adj[node] {
                if pot[next].is_nan() {
                    let (i, j) = if node < m { (node, next - m) } else { (next, node - m) };
                    pot[next] = cost[i * n + j] - pot[node];
                    queue.push_back(next);
                }
            }
        }
        let v = pot.split_off(m);
        (pot, v)
    }

    /// Tree path from column node `m + j` to row node `i`, as cells.
    fn path(&self, i: usize, j: usize) -> Vec<(usize, usize)> {
        let m = self.m;
        let mut parent = vec![usize::MAX; m + self.n];
        parent[i] = i;
        let mut queue = VecDeque::from([i]);
        while let Some(node) = queue.pop_front() {
            if node == m + j {
                break;
            }
            for &next in &self.adj[node] {
                if parent[next] == usize::MAX {
                    parent[next] = node;
                    queue.push_back(next);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = m + j;
        while node != i {
            let prev = parent[node];
            cells.push(if node >= m { (prev, node - m) } else { (node, prev - m) });
            node = prev;
        }
        cells
    }
}

/// Exact optimal transport between balanced measures.
pub fn solve_exact_ot(problem: &ProblemInstance) -> Result<ExactOTResult> {
    let a = problem.a().weights();
    let b = problem.b().weights();
    let (ta, tb) = (problem.a().total(), problem.b().total());
    if !problem.is_balanced(1e-12 * ta.max(1.0)) {
        return Err(Error::Unbalanced { a: ta, b: tb });
    }
    let (m, n) = (a.len(), b.len());
    let cost = problem.cost().as_slice();
    let scale = problem.cost().max().abs().max(problem.cost().min().abs()).max(1.0);
    let eps = 1e-13 * scale;
    let mut basis = Basis::northwest_corner(a, b);
    let max_pivots = 50 * m * n + 10_000;
    let mut pivots = 0;
    loop {
        let (u, v) = basis.potentials(cost);
        let entering = (0..m * n).find(|&k| !basis.basic[k] && cost[k] - u[k / n] - v[k % n] < -eps);
        let Some(k) = entering else {
            let entries = (0..m * n)
                .filter(|&k| basis.basic[k] && basis.flow[k] > 0.0)
                .map(|k| (k / n, k % n, basis.flow[k]))
                .collect();
            let plan = TransportPlan::from_entries(m, n, entries)?;
            let total = plan.inner(problem.cost());
            return Ok(ExactOTResult {
                plan,
                cost: total,
                dual_f: u,
                dual_g: v,
                pivots,
            });
        };
        if pivots >= max_pivots {
            return Err(Error::Exact(format!("no optimal basis after {pivots} pivots")));
        }
        pivots += 1;
        let (i, j) = (k / n, k % n);
        let cycle = basis.path(i, j);
        // Cells at even positions of the path lose flow.
        let (li, lj) = cycle
            .iter()
            .step_by(2)
            .copied()
            .min_by(|&(r1, c1), &(r2, c2)| {
                basis.flow[r1 * n + c1]
                    .total_cmp(&basis.flow[r2 * n + c2])
                    .then((r1 * n + c1).cmp(&(r2 * n + c2)))
            })
            .expect("cycle has at least one cell");
        let theta = basis.flow[li * n + lj];
        for (pos, &(r, c)) in cycle.iter().enumerate() {
            let x = &mut basis.flow[r * n + c];
            if pos % 2 == 0 {
                *x = (*x - theta).max(0.0);
            } else {
                *x += theta;
            }
        }
        basis.remove(li, lj);
        basis.insert(i, j, theta);
    }
}

/// Gradient-mapping tolerance of the dense oracle.
pub const ORACLE_TOL: f64 = 1e-10;

struct DenseDual<'a> {
    problem: &'a ProblemInstance,
    config: &'a SolverConfig,
    m: usize,
    n: usize,
}

impl DenseDual<'_> {
    fn marginals(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut rows = vec![0.0; self.m];
        let mut cols = vec![0.0; self.n];
        for (k, &x) in p.iter().enumerate() {
            rows[k / self.n] += x;
            cols[k % self.n] += x;
        }
        (rows, cols)
    }

    fn deviations(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let gamma = self.config.gamma;
        let (rows, cols) = self.marginals(p);
        let x = self.problem.a().weights().iter().zip(&rows).map(|(w, r)| gamma * (w - r)).collect();
        let y = self.problem.b().weights().iter().zip(&cols).map(|(w, c)| gamma * (w - c)).collect();
        (x, y)
    }

    /// `φ*` with the exponential domain taken open, so `∇φ*` stays finite.
    fn conjugate(reg: Regularizer, x: &[f64]) -> Option<f64> {
        if reg == Regularizer::Exponential && x.iter().any(|&v| !(v > 0.0)) {
            return None;
        }
        reg.conjugate(x).ok()
    }

    fn objective(&self, p: &[f64]) -> Option<f64> {
        let gamma = self.config.gamma;
        let (x, y) = self.deviations(p);
        let linear: f64 = p.iter().zip(self.problem.cost().as_slice()).map(|(p, c)| p * c).sum();
        let value = linear
            + Self::conjugate(self.config.phi, &x)? / gamma
            + Self::conjugate(self.config.varphi, &y)? / gamma;
        value.is_finite().then_some(value)
    }

    fn coords(&self, p: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let (x, y) = self.deviations(p);
        let f = x.iter().map(|&t| self.config.phi.coord_of_grad(t)).collect::<Option<Vec<_>>>()?;
        let g = y.iter().map(|&t| self.config.varphi.coord_of_grad(t)).collect::<Option<Vec<_>>>()?;
        Some((f, g))
    }

    /// `C_ij − f_i − g_j` with `f = ∇φ*(γ(a − P1))`.
    fn gradient(&self, p: &[f64]) -> Option<Vec<f64>> {
        let (fc, gc) = self.coords(p)?;
        let f: Vec<f64> = fc.iter().map(|&c| self.config.phi.from_coord(c)).collect();
        let g: Vec<f64> = gc.iter().map(|&c| self.config.varphi.from_coord(c)).collect();
        Some(
            self.problem
                .cost()
                .as_slice()
                .iter()
                .enumerate()
                .map(|(k, c)| c - f[k / self.n] - g[k % self.n])
                .collect(),
        )
    }
}

/// Accelerated projected gradient on the dense dual objective over `P ≥ 0`,
/// with backtracking and a restart whenever the objective goes up. Runs
/// until `max |min(P_ij, ∂_ij)| ≤ ORACLE_TOL` or `step_budget` iterations;
/// an exhausted budget is reported through `converged = false`. Steps
/// leaving the domain of the conjugates are rejected by the line search.
pub fn solve_drot_dense_oracle(
    problem: &ProblemInstance,
    config: &SolverConfig,
    step_budget: usize,
) -> Result<SolveResult> {
    config.validate(problem)?;
    let effective = config.effective_problem(problem);
    let (m, n) = (effective.rows(), effective.cols());
    let dual = DenseDual {
        problem: &effective,
        config,
        m,
        n,
    };
    let left_domain = || Error::InvalidPlan("oracle iterate left the conjugate domain".into());
    let mut p = vec![0.0; m * n];
    let mut value = dual
        .objective(&p)
        .ok_or_else(|| Error::InvalidConfig("dual objective undefined at the zero plan".into()))?;
    let mut y = p.clone();
    let mut y_value = value;
    let mut momentum: f64 = 1.0;
    let mut step = 1.0 / config.gamma;
    let mut iterations = 0;
    let mut converged = false;
    let mut candidate = vec![0.0; m * n];
    while iterations < step_budget {
        let grad = dual.gradient(&p).ok_or_else(left_domain)?;
        let residual = p.iter().zip(&grad).map(|(x, d)| x.min(*d).abs()).fold(0.0, f64::max);
        if residual <= ORACLE_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let grad_y = match dual.gradient(&y) {
            Some(g) => g,
            None => {
                y.copy_from_slice(&p);
                y_value = value;
                momentum = 1.0;
                grad
            }
        };
        let mut accepted = None;
        while step > f64::MIN_POSITIVE {
            let mut lin = 0.0;
            let mut sq = 0.0;
            for k in 0..m * n {
                candidate[k] = (y[k] - step * grad_y[k]).max(0.0);
                let d = candidate[k] - y[k];
                lin += grad_y[k] * d;
                sq += d * d;
            }
            if let Some(next) = dual.objective(&candidate) {
                if next <= y_value + lin + sq / (2.0 * step) + 1e-15 * (1.0 + y_value.abs()) {
                    accepted = Some(next);
                    break;
                }
            }
            step /= 2.0;
        }
        let Some(next) = accepted else { break };
        if next > value {
            y.copy_from_slice(&p);
            y_value = value;
            momentum = 1.0;
            continue;
        }
        let following = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let beta = (momentum - 1.0) / following;
        momentum = following;
        for k in 0..m * n {
            y[k] = (candidate[k] + beta * (candidate[k] - p[k])).max(0.0);
        }
        std::mem::swap(&mut p, &mut candidate);
        value = next;
        y_value = dual.objective(&y).unwrap_or(f64::INFINITY);
        if !y_value.is_finite() {
            y.copy_from_slice(&p);
            y_value = value;
            momentum = 1.0;
        }
        step *= 1.25;
    }

    let (fc, gc) = dual.coords(&p).ok_or_else(left_domain)?;
    let potentials = DualPotentials::from_coords(config.phi, config.varphi, fc, gc);
    let plan = TransportPlan::from_dense(m, n, &p);
    let primal = primal_objective(&effective, &potentials, config.gamma);
    let dual_value = dual_objective(
        &effective,
        &plan,
        config.phi,
        config.varphi,
        config.gamma,
        potentials.c1(),
        potentials.c2(),
    )?;
    let feasibility = feasibility_error(&potentials.f(), &potentials.g(), effective.cost(), config.gamma);
    Ok(SolveResult {
        potentials,
        plan,
        primal_objective: primal,
        dual_objective: dual_value,
        feasibility_error: feasibility,
        sweeps: iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{CostMatrix, Measure};

    fn instance(a: &[f64], b: &[f64], c: &[Vec<f64>]) -> ProblemInstance {
        ProblemInstance::new(
            Measure::new(a.to_vec()).unwrap(),
            Measure::new(b.to_vec()).unwrap(),
            CostMatrix::from_rows(c).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn single_atom() {
        let r = solve_exact_ot(&instance(&[1.0], &[1.0], &[vec![5.0]])).unwrap();
        assert_eq!(r.plan.entries(), &[(0, 0, 1.0)]);
        assert_eq!(r.cost, 5.0);
        assert_eq!(r.dual_f[0] + r.dual_g[0], 5.0);
    }

    #[test]
    fn zero_cost_matching() {
        let r = solve_exact_ot(&instance(&[0.5, 0.5], &[0.5, 0.5], &[vec![0.0, 1.0], vec![1.0, 0.0]])).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.plan.get(0, 0), 0.5);
        assert_eq!(r.plan.get(1, 1), 0.5);
        assert_eq!(r.plan.support_size(0.0), 2);
    }

    #[test]
    fn two_by_two() {
        let r = solve_exact_ot(&instance(&[0.3, 0.7], &[0.6, 0.4], &[vec![1.0, 2.0], vec![3.0, 1.0]])).unwrap();
        assert!((r.cost - 1.6).abs() < 1e-12);
        assert!((r.plan.get(0, 0) - 0.3).abs() < 1e-12);
        assert_eq!(r.plan.get(0, 1), 0.0);
        assert!((r.plan.get(1, 0) - 0.3).abs() < 1e-12);
        assert!((r.plan.get(1, 1) - 0.4).abs() < 1e-12);
        assert_eq!(r.dual_f[0], 0.0);
    }

    #[test]
    fn unbalanced_is_rejected() {
        let err = solve_exact_ot(&instance(&[1.0], &[2.0], &[vec![1.0]])).unwrap_err();
        assert!(matches!(err, Error::Unbalanced { .. }));
    }

    #[test]
    fn oracle_trivial() {
        let p = instance(&[1.0], &[1.0], &[vec![0.0]]);
        let r = solve_drot_dense_oracle(&p, &SolverConfig::symmetric(1.0, Regularizer::Quadratic), 10_000).unwrap();
        assert!(r.converged);
        assert!((r.plan.get(0, 0) - 1.0).abs() < 1e-9);
        assert!(r.dual_objective.abs() < 1e-9);
    }

    #[test]
    fn oracle_exponential_stays_in_domain() {
        let p = instance(&[0.3, 0.7], &[0.6, 0.4], &[vec![0.1, 0.5], vec![0.4, 0.2]]);
        let r =
            solve_drot_dense_oracle(&p, &SolverConfig::symmetric(5.0, Regularizer::Exponential), 200_000).unwrap();
        for (w, s) in p.a().weights().iter().zip(r.plan.row_sums()) {
            assert!(s <= *w);
        }
        for (w, s) in p.b().weights().iter().zip(r.plan.col_sums()) {
            assert!(s <= *w);
        }
    }
}
