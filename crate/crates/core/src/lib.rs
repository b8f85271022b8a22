//! Dual-regularized optimal transport.
//!
//! The transport problem is solved through its dual: maximize
//! `⟨f,a⟩ + ⟨g,b⟩ − (φ(f) + φ(g))/γ` subject to `f_i + g_j ≤ C_ij`, with a
//! strictly convex `φ` chosen among quadratic, entropy and exponential. The
//! multipliers of the constraints form a sparse transport plan whose
//! marginals may deviate from `a` and `b`.
//!
//! * [`solver`]: active-set cyclic Bregman projections.
//! * [`exact`]: network simplex for the exact transport LP and a dense
//!   accelerated projected-gradient solver for the regularized dual, both used as
//!   references.
//! * [`diagnostics`]: KKT residuals, duality gap, approximation bounds,
//!   mass change and support checks.
//! * [`transfer`]: k-means color quantization and barycentric color
//!   transfer.
//! * [`io`] and [`experiments`]: file formats and sweep harness used by the
//!   `drot` command-line tool.

pub mod diagnostics;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod io;
pub mod problem;
pub mod random;
pub mod regularizer;
pub mod scan;
pub mod solver;
pub mod transfer;

pub use error::{Error, Result, ThetaError};
pub use problem::{
    gaussian_instance, sqeuclidean_cost, CostMatrix, DualPotentials, Measure, ProblemInstance, SolveResult,
    SolverConfig, TransportPlan,
};
pub use regularizer::{solve_theta, Regularizer};
pub use solver::{solve, SweepStats};
