//! File formats.
//!
//! * Problem files are JSON: `{"a": [...], "b": [...], "cost": C}` with
//!   `C` either `{"dense": [[...], ...]}` or
//!   `{"sqeuclidean": {"x": [[...], ...], "y": [[...], ...]}}`.
//! * Plans are CSV with header `i,j,value` and one nonzero per line,
//!   values written in shortest round-trip decimal.
//! * Run summaries and potentials are JSON.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::DiagnosticsReport;
use crate::error::{Error, Result};
use crate::problem::{
    dual_objective, primal_objective, sqeuclidean_cost, CostMatrix, DualPotentials, Measure, ProblemInstance,
    SolveResult, SolverConfig, TransportPlan,
};
use crate::regularizer::Regularizer;
use crate::solver::feasibility_error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostSpec {
    Dense(Vec<Vec<f64>>),
    Sqeuclidean { x: Vec<Vec<f64>>, y: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub cost: CostSpec,
}

impl ProblemFile {
    pub fn from_instance(problem: &ProblemInstance) -> Self {
        ProblemFile {
            a: problem.a().weights().to_vec(),
            b: problem.b().weights().to_vec(),
            cost: CostSpec::Dense(problem.cost().to_rows()),
        }
    }

    pub fn to_instance(&self) -> Result<ProblemInstance> {
        let cost = match &self.cost {
            CostSpec::Dense(rows) => CostMatrix::from_rows(rows)?,
            CostSpec::Sqeuclidean { x, y } => sqeuclidean_cost(x, y)?,
        };
        ProblemInstance::new(Measure::new(self.a.clone())?, Measure::new(self.b.clone())?, cost)
    }
}

/// Byte offset of a 1-based line/column position in `text`.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

fn json_error(text: &str, err: serde_json::Error) -> Error {
    Error::Parse {
        offset: byte_offset(text, err.line(), err.column()),
        message: err.to_string(),
    }
}

pub fn parse_problem(text: &str) -> Result<ProblemInstance> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| json_error(text, e))?;
    file.to_instance()
}

pub fn problem_to_json(problem: &ProblemInstance) -> String {
    serde_json::to_string_pretty(&ProblemFile::from_instance(problem)).expect("problem serializes")
}

pub fn read_problem(path: &Path) -> Result<ProblemInstance> {
    parse_problem(&fs::read_to_string(path)?)
}

pub const PLAN_HEADER: &str = "i,j,value";

pub fn plan_to_csv(plan: &TransportPlan) -> String {
    let mut out = String::with_capacity(16 * plan.nnz() + 16);
    out.push_str(PLAN_HEADER);
    out.push('\n');
    for &(i, j, v) in plan.entries() {
        out.push_str(&format!("{i},{j},{v}\n"));
    }
    out
}

/// Parses a plan of shape `rows × cols`. Errors point at the start of the
/// offending line.
pub fn parse_plan(text: &str, rows: usize, cols: usize) -> Result<TransportPlan> {
    let mut offset = 0;
    let mut entries = Vec::new();
    for (n, line) in text.split_inclusive('\n').enumerate() {
        let here = offset;
        offset += line.len();
        let line = line.trim_end_matches(['\n', '\r']);
        if n == 0 {
            if line.trim() != PLAN_HEADER {
                return Err(Error::Parse {
                    offset: here,
                    message: format!("expected header `{PLAN_HEADER}`"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { offset: here, message };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [i, j, v] = fields[..] else {
            return Err(bad(format!("expected 3 fields, found {}", fields.len())));
        };
        let i: usize = i.parse().map_err(|e| bad(format!("row index: {e}")))?;
        let j: usize = j.parse().map_err(|e| bad(format!("column index: {e}")))?;
        let v: f64 = v.parse().map_err(|e| bad(format!("value: {e}")))?;
        entries.push((i, j, v));
    }
    if offset == 0 {
        return Err(Error::Parse {
            offset: 0,
            message: "empty plan file".into(),
        });
    }
    TransportPlan::from_entries(rows, cols, entries)
}

pub fn read_plan(path: &Path, rows: usize, cols: usize) -> Result<TransportPlan> {
    parse_plan(&fs::read_to_string(path)?, rows, cols)
}

/// Companion summary of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub feasibility_error: f64,
    pub sweeps: usize,
    pub nnz: usize,
    pub mass_created: f64,
    pub mass_destroyed: f64,
    pub converged: bool,
    pub config: SolverConfig,
}

impl Summary {
    pub fn new(result: &SolveResult, report: &DiagnosticsReport, config: &SolverConfig) -> Self {
        Summary {
            primal_objective: result.primal_objective,
            dual_objective: result.dual_objective,
            feasibility_error: result.feasibility_error,
            sweeps: result.sweeps,
            nnz: result.plan.nnz(),
            mass_created: report.mass_created,
            mass_destroyed: report.mass_destroyed,
            converged: result.converged,
            config: config.clone(),
        }
    }
}

/// Potentials together with the configuration that produced them. Entropy
/// potentials also carry their logarithms, which are preferred on reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialsFile {
    pub config: SolverConfig,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_f: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_g: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<Vec<f64>>,
}

impl PotentialsFile {
    pub fn new(potentials: &DualPotentials, config: &SolverConfig) -> Self {
        let log = |reg: Regularizer, coords: &[f64]| (reg == Regularizer::Entropy).then(|| coords.to_vec());
        PotentialsFile {
            config: config.clone(),
            f: potentials.f(),
            g: potentials.g(),
            log_f: log(potentials.phi(), potentials.f_coords()),
            log_g: log(potentials.varphi(), potentials.g_coords()),
            c1: potentials.c1().map(<[f64]>::to_vec),
            c2: potentials.c2().map(<[f64]>::to_vec),
        }
    }

    pub fn potentials(&self) -> Result<DualPotentials> {
        let (phi, varphi) = (self.config.phi, self.config.varphi);
        let coords = |reg: Regularizer, values: &[f64], log: &Option<Vec<f64>>| -> Result<Vec<f64>> {
            match log {
                Some(log) if reg == Regularizer::Entropy => Ok(log.clone()),
                _ => values
                    .iter()
                    .enumerate()
                    .map(|(index, &v)| {
                        reg.to_coord(v).ok_or(Error::Domain {
                            regularizer: reg,
                            index,
                            value: v,
                        })
                    })
                    .collect(),
            }
        };
        let f = coords(phi, &self.f, &self.log_f)?;
        let g = coords(varphi, &self.g, &self.log_g)?;
        DualPotentials::from_coords(phi, varphi, f, g).with_nonnegativity_duals(self.c1.clone(), self.c2.clone())
    }
}

pub fn parse_potentials(text: &str) -> Result<PotentialsFile> {
    serde_json::from_str(text).map_err(|e| json_error(text, e))
}

/// Rebuilds a solve result from files, recomputing objectives and
/// feasibility on the (cost-shifted) problem.
pub fn assemble_result(
    problem: &ProblemInstance,
    plan: TransportPlan,
    potentials: DualPotentials,
    config: &SolverConfig,
) -> Result<SolveResult> {
    let shape = |what, expected, found| Error::DimensionMismatch { what, expected, found };
    if plan.rows() != problem.rows() {
        return Err(shape("plan rows", problem.rows(), plan.rows()));
    }
    if plan.cols() != problem.cols() {
        return Err(shape("plan columns", problem.cols(), plan.cols()));
    }
    if potentials.f_coords().len() != problem.rows() {
        return Err(shape("potential f", problem.rows(), potentials.f_coords().len()));
    }
    if potentials.g_coords().len() != problem.cols() {
        return Err(shape("potential g", problem.cols(), potentials.g_coords().len()));
    }
    let effective = config.effective_problem(problem);
    let gamma = config.gamma;
    let dual = dual_objective(
        &effective,
        &plan,
        config.phi,
        config.varphi,
        gamma,
        potentials.c1(),
        potentials.c2(),
    )
    .unwrap_or(f64::NAN);
    Ok(SolveResult {
        primal_objective: primal_objective(&effective, &potentials, gamma),
        dual_objective: dual,
        feasibility_error: feasibility_error(&potentials.f(), &potentials.g(), effective.cost(), gamma),
        sweeps: 0,
        converged: true,
        potentials,
        plan,
    })
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes")
}
