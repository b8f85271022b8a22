//! Sweep harness behind `drot experiment`. Every cell of a sweep is an
//! isolated solve, so cells run concurrently; rows come back in cell order
//! and are written as CSV.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{kkt_report, SUPPORT_TOL};
use crate::error::{Error, Result};
use crate::exact::solve_exact_ot;
use crate::problem::{gaussian_instance, CostMatrix, ProblemInstance, SolverConfig};
use crate::random::{seeded_simplex_instance, GENERATOR};
use crate::regularizer::Regularizer;
use crate::solver::solve;
use crate::transfer::DEFAULT_ENTROPY_SHIFT;

#[cfg(feature = "parallel")]
fn run_cells<T: Sync, R: Send>(cells: &[T], f: impl Fn(&T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    use rayon::prelude::*;
    cells.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_cells<T: Sync, R: Send>(cells: &[T], f: impl Fn(&T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    cells.iter().map(f).collect()
}

/// Configuration of one cell; entropy runs get the default cost shift.
pub fn cell_config(reg: Regularizer, gamma: f64, tol: f64) -> SolverConfig {
    let config = SolverConfig::symmetric(gamma, reg).with_tol(tol);
    if reg == Regularizer::Entropy {
        config.with_cost_shift(DEFAULT_ENTROPY_SHIFT)
    } else {
        config
    }
}

/// Gaussian pair with means ±15 and variance 10 on `[−20, 20]`.
pub fn gaussian_benchmark(n: usize) -> Result<ProblemInstance> {
    gaussian_instance(n, -15.0, 15.0, 10.0, -20.0, 20.0)
}

/// The Gaussian pair with unit cost everywhere.
pub fn gaussian_unit_cost(n: usize) -> Result<ProblemInstance> {
    let p = gaussian_benchmark(n)?;
    p.with_cost(CostMatrix::constant(n, n, 1.0)?)
}

/// Reproducibility record written next to experiment output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMeta {
    pub experiment: String,
    pub generator: String,
    pub seed: u64,
    pub instances: usize,
    pub size: usize,
    pub gammas: Vec<f64>,
    pub regularizers: Vec<Regularizer>,
    pub tol: f64,
}

impl ExperimentMeta {
    pub fn new(experiment: &str, seed: u64, instances: usize, size: usize, gammas: &[f64], regs: &[Regularizer], tol: f64) -> Self {
        ExperimentMeta {
            experiment: experiment.into(),
            generator: GENERATOR.into(),
            seed,
            instances,
            size,
            gammas: gammas.to_vec(),
            regularizers: regs.to_vec(),
            tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityRow {
    pub regularizer: Regularizer,
    pub gamma: f64,
    pub instance: u64,
    pub nnz: usize,
    pub exact_nnz: usize,
    pub converged: bool,
}

/// Support size of the regularized plan against the exact plan on seeded
/// random `n × n` instances with `C ~ U[0,1)`.
pub fn sparsity(seed: u64, instances: u64, n: usize, gammas: &[f64], regs: &[Regularizer], tol: f64) -> Result<Vec<SparsityRow>> {
    let problems: Vec<_> = (0..instances).map(|k| seeded_simplex_instance(seed, k, n, n)).collect::<Result<_>>()?;
    let exact: Vec<usize> = run_cells(&problems, |p| Ok(solve_exact_ot(p)?.plan.support_size(SUPPORT_TOL)))?;
    let cells: Vec<(u64, Regularizer, f64)> = (0..instances)
        .flat_map(|k| regs.iter().flat_map(move |&r| gammas.iter().map(move |&g| (k, r, g))))
        .collect();
    run_cells(&cells, |&(k, reg, gamma)| {
        let r = solve(&problems[k as usize], &cell_config(reg, gamma, tol))?;
        Ok(SparsityRow {
            regularizer: reg,
            gamma,
            instance: k,
            nnz: r.plan.support_size(SUPPORT_TOL),
            exact_nnz: exact[k as usize],
            converged: r.converged,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub regularizer: Regularizer,
    pub gamma: f64,
    /// `OT − DROT`
    pub objective_gap: f64,
    /// `|⟨C, P* − P_γ⟩|`
    pub cost_gap: f64,
    /// `‖a − P_γ1‖₂`
    pub marginal_gap: f64,
    /// `(φ*(γ(a − P_γ1)) + φ*(γ(b − P_γᵀ1)))/γ`
    pub conjugate_gap: f64,
    pub converged: bool,
}

/// Approximation errors against the exact solution over a `γ` sweep on
/// `problem`.
pub fn rate(problem: &ProblemInstance, gammas: &[f64], regs: &[Regularizer], tol: f64) -> Result<Vec<RateRow>> {
    let cells: Vec<(Regularizer, f64)> = regs.iter().flat_map(|&r| gammas.iter().map(move |&g| (r, g))).collect();
    run_cells(&cells, |&(reg, gamma)| {
        let config = cell_config(reg, gamma, tol);
        let effective = config.effective_problem(problem);
        let exact = solve_exact_ot(&effective)?;
        let r = solve(problem, &config)?;
        let report = kkt_report(problem, &config, &r);
        let transport = r.plan.inner(effective.cost());
        Ok(RateRow {
            regularizer: reg,
            gamma,
            objective_gap: exact.cost - r.primal_objective,
            cost_gap: (exact.cost - transport).abs(),
            marginal_gap: report.marginal_dev_a.iter().map(|d| d * d).sum::<f64>().sqrt(),
            conjugate_gap: r.dual_objective - transport,
            converged: r.converged,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassRow {
    pub regularizer: Regularizer,
    pub gamma: f64,
    pub instance: u64,
    /// `a` or `b`
    pub side: char,
    pub index: usize,
    /// `w − marginal`; negative is created mass.
    pub deviation: f64,
    pub converged: bool,
}

/// Per-atom marginal deviations on seeded random `n × n` instances.
pub fn mass(seed: u64, instances: u64, n: usize, gammas: &[f64], regs: &[Regularizer], tol: f64) -> Result<Vec<MassRow>> {
    let cells: Vec<(u64, Regularizer, f64)> = (0..instances)
        .flat_map(|k| regs.iter().flat_map(move |&r| gammas.iter().map(move |&g| (k, r, g))))
        .collect();
    let blocks = run_cells(&cells, |&(k, reg, gamma)| {
        let problem = seeded_simplex_instance(seed, k, n, n)?;
        let config = cell_config(reg, gamma, tol);
        let r = solve(&problem, &config)?;
        let report = kkt_report(&problem, &config, &r);
        let row = |side, index, deviation| MassRow {
            regularizer: reg,
            gamma,
            instance: k,
            side,
            index,
            deviation,
            converged: r.converged,
        };
        let mut rows: Vec<MassRow> = report.marginal_dev_a.iter().enumerate().map(|(i, &d)| row('a', i, d)).collect();
        rows.extend(report.marginal_dev_b.iter().enumerate().map(|(j, &d)| row('b', j, d)));
        Ok(rows)
    })?;
    Ok(blocks.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub regularizer: Regularizer,
    pub gamma: f64,
    pub n: usize,
    pub seconds: f64,
    pub sweeps: usize,
    pub feasibility_error: f64,
    pub converged: bool,
}

/// Wall time of solving the Gaussian benchmark; cells run one at a time so
/// timings do not compete for cores.
pub fn timing(sizes: &[usize], gammas: &[f64], regs: &[Regularizer], tol: f64) -> Result<Vec<TimingRow>> {
    let mut rows = Vec::new();
    for &n in sizes {
        let problem = gaussian_benchmark(n)?;
        for &reg in regs {
            for &gamma in gammas {
                let config = cell_config(reg, gamma, tol);
                let start = Instant::now();
                let r = solve(&problem, &config)?;
                rows.push(TimingRow {
                    regularizer: reg,
                    gamma,
                    n,
                    seconds: start.elapsed().as_secs_f64(),
                    sweeps: r.sweeps,
                    feasibility_error: r.feasibility_error,
                    converged: r.converged,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_csv<R: Serialize, W: Write>(rows: &[R], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparsity_rows_cover_cells() {
        let rows = sparsity(1, 2, 8, &[1.0, 100.0], &[Regularizer::Quadratic], 1e-8).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.exact_nnz <= 15));
    }

    #[test]
    fn exponential_mass_never_created() {
        let rows = mass(3, 2, 10, &[10.0], &[Regularizer::Exponential], 1e-10).unwrap();
        assert_eq!(rows.len(), 2 * 20);
        assert!(rows.iter().all(|r| r.deviation >= -1e-8), "{rows:?}");
    }

    #[test]
    fn csv_has_header() {
        let rows = timing(&[11], &[10.0], &[Regularizer::Quadratic], 1e-8).unwrap();
        let mut out = Vec::new();
        write_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("regularizer,gamma,n,seconds,sweeps,feasibility_error,converged\n"));
    }
}
