//! Seeded random instances. All randomness comes from [`Rng`], a ChaCha8
//! stream seeded with a `u64`, so experiments replicate exactly.

use rand::{Rng as _, SeedableRng};
use rand_distr::{Distribution, Exp1};

use crate::error::Result;
use crate::problem::{CostMatrix, Measure, ProblemInstance};

pub type Rng = rand_chacha::ChaCha8Rng;

/// Recorded in experiment metadata.
pub const GENERATOR: &str = "ChaCha8Rng(seed_from_u64)";

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Uniform sample from the probability simplex over `n` atoms
/// (normalized i.i.d. Exp(1) draws). Every weight is strictly positive.
pub fn simplex(rng: &mut Rng, n: usize) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = raw.iter().sum();
        if raw.iter().all(|&x| x > 0.0) && total > 0.0 {
            return raw.into_iter().map(|x| x / total).collect();
        }
    }
}

/// `C_ij ~ U[0, 1)` i.i.d.
pub fn uniform_cost(rng: &mut Rng, m: usize, n: usize) -> CostMatrix {
    let data = (0..m * n).map(|_| rng.random::<f64>()).collect();
    CostMatrix::new(m, n, data).expect("uniform costs are finite and nonnegative")
}

/// `a, b` uniform on the simplex, `C ~ U[0,1)`.
pub fn simplex_instance(rng: &mut Rng, m: usize, n: usize) -> Result<ProblemInstance> {
    let a = simplex(rng, m);
    let b = simplex(rng, n);
    let cost = uniform_cost(rng, m, n);
    ProblemInstance::new(Measure::new(a)?, Measure::new(b)?, cost)
}

/// Convenience: the `index`-th instance of a seeded family.
pub fn seeded_simplex_instance(seed: u64, index: u64, m: usize, n: usize) -> Result<ProblemInstance> {
    let mut r = rng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index));
    simplex_instance(&mut r, m, n)
}
