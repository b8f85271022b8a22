//! The three strictly convex potentials penalizing the dual variables, together
//! with the calculus the solver needs: value, gradient, inverse gradient,
//! convex conjugate and the scalar Bregman projection step.
//!
//! Potentials are carried internally in a *coordinate* chosen per kind so
//! that the projection step never leaves the domain: quadratic and
//! exponential store the potential itself, entropy stores `log f`.
//! Shifting a coordinate by `t` always means `∇φ(f') = ∇φ(f) + t`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ThetaError};

/// Which regularizer penalizes a potential vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularizer {
    /// `φ(v) = Σ v²`
    Quadratic,
    /// `φ(v) = Σ v log v − v`, defined for `v ≥ 0`.
    Entropy,
    /// `φ(v) = Σ e^v`
    Exponential,
}

/// Growth class of a regularizer, which decides whether mass can only be
/// destroyed, only created, or both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoFiniteness {
    Both,
    Positive,
    Negative,
}

impl Regularizer {
    pub const ALL: [Regularizer; 3] = [
        Regularizer::Quadratic,
        Regularizer::Entropy,
        Regularizer::Exponential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regularizer::Quadratic => "quadratic",
            Regularizer::Entropy => "entropy",
            Regularizer::Exponential => "exponential",
        }
    }

    /// Entropy is co-finite, but its domain `v ≥ 0` pushes the transport
    /// towards creating mass.
    pub fn co_finiteness(self) -> CoFiniteness {
        match self {
            Regularizer::Quadratic | Regularizer::Entropy => CoFiniteness::Both,
            Regularizer::Exponential => CoFiniteness::Positive,
        }
    }

    fn domain_error(self, index: usize, value: f64) -> Error {
        Error::Domain {
            regularizer: self,
            index,
            value,
        }
    }

    pub fn value(self, v: &[f64]) -> Result<f64> {
        let mut sum = 0.0;
        for (index, &x) in v.iter().enumerate() {
            if !x.is_finite() {
                return Err(self.domain_error(index, x));
            }
            sum += match self {
                Regularizer::Quadratic => x * x,
                Regularizer::Exponential => x.exp(),
                Regularizer::Entropy => {
                    if x < 0.0 {
                        return Err(self.domain_error(index, x));
                    }
                    xlogx(x) - x
                }
            };
        }
        Ok(sum)
    }

    pub fn grad(self, v: &[f64]) -> Result<Vec<f64>> {
        v.iter()
            .enumerate()
            .map(|(index, &x)| match self {
                Regularizer::Quadratic if x.is_finite() => Ok(2.0 * x),
                Regularizer::Exponential if x.is_finite() => Ok(x.exp()),
                Regularizer::Entropy if x > 0.0 && x.is_finite() => Ok(x.ln()),
                _ => Err(self.domain_error(index, x)),
            })
            .collect()
    }

    /// `∇φ⁻¹ = ∇φ*`.
    pub fn grad_inverse(self, y: &[f64]) -> Result<Vec<f64>> {
        y.iter()
            .enumerate()
            .map(|(index, &x)| match self {
                Regularizer::Quadratic if x.is_finite() => Ok(x / 2.0),
                Regularizer::Exponential if x > 0.0 && x.is_finite() => Ok(x.ln()),
                Regularizer::Entropy if x.is_finite() => Ok(x.exp()),
                _ => Err(self.domain_error(index, x)),
            })
            .collect()
    }

    /// Convex conjugate `φ*(x) = sup_v ⟨v, x⟩ − φ(v)`.
    pub fn conjugate(self, x: &[f64]) -> Result<f64> {
        let mut sum = 0.0;
        for (index, &y) in x.iter().enumerate() {
            if !y.is_finite() {
                return Err(self.domain_error(index, y));
            }
            sum += match self {
                Regularizer::Quadratic => y * y / 4.0,
                Regularizer::Entropy => y.exp(),
                Regularizer::Exponential => {
                    if y < 0.0 {
                        return Err(self.domain_error(index, y));
                    }
                    xlogx(y) - y
                }
            };
        }
        Ok(sum)
    }

    /// Conjugate evaluated on a marginal deviation computed by subtraction,
    /// where the exponential domain boundary `x ≥ 0` may be missed by a few
    /// ulps. Entries in `[-slack, 0)` are read as zero.
    pub(crate) fn conjugate_lenient(self, x: &[f64], slack: f64) -> Result<f64> {
        if self != Regularizer::Exponential {
            return self.conjugate(x);
        }
        let clamped: Vec<f64> = x
            .iter()
            .map(|&y| if y < 0.0 && y >= -slack { 0.0 } else { y })
            .collect();
        self.conjugate(&clamped)
    }

    // ---- coordinate representation used by the solver ----

    /// Maps a potential value to its internal coordinate.
    pub fn to_coord(self, value: f64) -> Option<f64> {
        match self {
            Regularizer::Entropy => (value > 0.0).then(|| value.ln()),
            _ => value.is_finite().then_some(value),
        }
    }

    pub fn from_coord(self, coord: f64) -> f64 {
        match self {
            Regularizer::Entropy => coord.exp(),
            _ => coord,
        }
    }

    /// `∇φ` evaluated at the potential stored as `coord`.
    pub fn grad_of_coord(self, coord: f64) -> f64 {
        match self {
            Regularizer::Quadratic => 2.0 * coord,
            Regularizer::Exponential => coord.exp(),
            Regularizer::Entropy => coord,
        }
    }

    /// Coordinate of `∇φ⁻¹(y)`, or `None` outside the range of `∇φ`.
    pub fn coord_of_grad(self, y: f64) -> Option<f64> {
        if !y.is_finite() {
            return None;
        }
        match self {
            Regularizer::Quadratic => Some(y / 2.0),
            Regularizer::Exponential => (y > 0.0).then(|| y.ln()),
            Regularizer::Entropy => Some(y),
        }
    }

    /// Scalar term `φ(v)` from the coordinate of `v`.
    pub fn value_of_coord(self, coord: f64) -> f64 {
        match self {
            Regularizer::Quadratic => coord * coord,
            Regularizer::Exponential => coord.exp(),
            Regularizer::Entropy => {
                let v = coord.exp();
                v * coord - v
            }
        }
    }

    /// Coordinate after moving the gradient by `t`: `∇φ(v') = ∇φ(v) + t`.
    /// `None` when `t` leaves the range of `∇φ` (exponential only).
    pub fn shift_coord(self, coord: f64, t: f64) -> Option<f64> {
        match self {
            Regularizer::Quadratic => Some(coord + t / 2.0),
            Regularizer::Entropy => Some(coord + t),
            Regularizer::Exponential => {
                let ratio = t * (-coord).exp();
                let shifted = if ratio.is_finite() {
                    if ratio <= -1.0 {
                        return None;
                    }
                    coord + ratio.ln_1p()
                } else {
                    let y = coord.exp() + t;
                    if y <= 0.0 {
                        return None;
                    }
                    y.ln()
                };
                shifted.is_finite().then_some(shifted)
            }
        }
    }

    /// Infimum of admissible gradient shifts `t` at `coord`.
    fn shift_lower_bound(self, coord: f64) -> f64 {
        match self {
            Regularizer::Exponential => -coord.exp(),
            _ => f64::NEG_INFINITY,
        }
    }

    /// Derivative of the potential value with respect to the gradient shift,
    /// evaluated at the shifted coordinate.
    fn value_slope(self, coord: f64) -> f64 {
        match self {
            Regularizer::Quadratic => 0.5,
            Regularizer::Entropy => coord.exp(),
            Regularizer::Exponential => (-coord).exp(),
        }
    }

    /// One Bregman update of a single potential entry with dual step `c`
    /// under regularizer weight `1/γ`: returns `v'` with
    /// `∇φ(v') = ∇φ(v) + γ c`.
    pub fn bregman_step(self, value: f64, c: f64, gamma: f64) -> Option<f64> {
        let coord = self.to_coord(value)?;
        let shifted = self.shift_coord(coord, gamma * c)?;
        Some(self.from_coord(shifted))
    }
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regularizer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "quadratic" => Ok(Regularizer::Quadratic),
            "entropy" => Ok(Regularizer::Entropy),
            "exponential" => Ok(Regularizer::Exponential),
            other => Err(format!(
                "unknown regularizer `{other}` (expected quadratic, entropy or exponential)"
            )),
        }
    }
}

/// `x log x` with `0 log 0 = 0`.
pub(crate) fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// One scalar Bregman projection onto `f_i + g_j = C_ij`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionStep {
    pub i: usize,
    pub j: usize,
    pub theta: f64,
    /// `min(P_ij, θ)`
    pub applied: f64,
}

/// Full projection in coordinates: the dual step `θ` and the coordinates
/// reached when it is applied in full.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct FullStep {
    pub theta: f64,
    pub f_coord: f64,
    pub g_coord: f64,
}

const ROOT_TOL: f64 = 1e-12;
const ROOT_MAX_ITERS: usize = 100;

/// Solves for the full step in coordinate space. `t = γθ` is the gradient
/// shift applied to both potentials.
pub(crate) fn full_step(
    phi: Regularizer,
    varphi: Regularizer,
    f_coord: f64,
    g_coord: f64,
    cost: f64,
    gamma: f64,
) -> Result<FullStep, ThetaError> {
    use Regularizer::*;
    let step = match (phi, varphi) {
        (Quadratic, Quadratic) => {
            let t = cost - f_coord - g_coord;
            FullStep {
                theta: t / gamma,
                f_coord: f_coord + t / 2.0,
                g_coord: g_coord + t / 2.0,
            }
        }
        (Entropy, Entropy) => {
            if cost <= 0.0 {
                return Err(ThetaError::NoRealSolution("entropy pair needs a positive cost"));
            }
            let t = cost.ln() - log_add_exp(f_coord, g_coord);
            FullStep {
                theta: t / gamma,
                f_coord: f_coord + t,
                g_coord: g_coord + t,
            }
        }
        (Exponential, Exponential) => exponential_pair(f_coord, g_coord, cost, gamma)?,
        _ => mixed_pair(phi, varphi, f_coord, g_coord, cost, gamma)?,
    };
    if step.theta.is_finite() && step.f_coord.is_finite() && step.g_coord.is_finite() {
        Ok(step)
    } else {
        Err(ThetaError::NoRealSolution("step is not representable"))
    }
}

fn log_add_exp(x: f64, y: f64) -> f64 {
    let m = x.max(y);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((x - m).exp() + (y - m).exp()).ln()
}

/// Closed form for the exponential pair: `(e^f + t)(e^g + t) = e^C`, taking
/// the root that keeps both gradients positive. The post-step gradients are
/// computed in cancellation-free form.
fn exponential_pair(f: f64, g: f64, cost: f64, gamma: f64) -> Result<FullStep, ThetaError> {
    let ef = f.exp();
    let eg = g.exp();
    let ec = cost.exp();
    if !(ef.is_finite() && eg.is_finite() && ec.is_finite()) {
        return Err(ThetaError::NoRealSolution("exponential overflow"));
    }
    let delta = ef - eg;
    let disc = delta * delta + 4.0 * ec;
    if !disc.is_finite() || disc < 0.0 {
        return Err(ThetaError::NoRealSolution("negative or overflowing discriminant"));
    }
    let r = disc.sqrt();
    let yf = if delta >= 0.0 {
        (delta + r) / 2.0
    } else {
        2.0 * ec / (r - delta)
    };
    let yg = if delta <= 0.0 {
        (r - delta) / 2.0
    } else {
        2.0 * ec / (r + delta)
    };
    if !(yf > 0.0 && yg > 0.0) {
        return Err(ThetaError::NoRealSolution("non-positive post-step gradient"));
    }
    Ok(FullStep {
        theta: (yf - ef) / gamma,
        f_coord: yf.ln(),
        g_coord: yg.ln(),
    })
}

/// Mixed pairs: `h(t) = f'(t) + g'(t) − C` is strictly increasing in the
/// gradient shift `t`; bracket the root and run Newton with bisection
/// fallback.
fn mixed_pair(
    phi: Regularizer,
    varphi: Regularizer,
    f: f64,
    g: f64,
    cost: f64,
    gamma: f64,
) -> Result<FullStep, ThetaError> {
    let eval = |t: f64| -> Option<(f64, f64, f64, f64)> {
        let fc = phi.shift_coord(f, t)?;
        let gc = varphi.shift_coord(g, t)?;
        let h = phi.from_coord(fc) + varphi.from_coord(gc) - cost;
        let dh = phi.value_slope(fc) + varphi.value_slope(gc);
        Some((h, dh, fc, gc))
    };
    let done = |t: f64, fc: f64, gc: f64| FullStep {
        theta: t / gamma,
        f_coord: fc,
        g_coord: gc,
    };

    let (h0, _, fc0, gc0) =
        eval(0.0).ok_or(ThetaError::NoRealSolution("potential outside domain"))?;
    if h0 == 0.0 {
        return Ok(done(0.0, fc0, gc0));
    }
    let floor = phi.shift_lower_bound(f).max(varphi.shift_lower_bound(g));

    // Bracket [lo, hi] with h(lo) < 0 < h(hi).
    let (mut lo, mut hi) = if h0 > 0.0 {
        let mut lo = None;
        for k in 0..2100 {
            let candidate = if floor.is_finite() {
                floor * (1.0 - 0.5_f64.powi(k + 1))
            } else {
                -(2.0_f64.powi(k))
            };
            if !candidate.is_finite() {
                break;
            }
            if let Some((h, _, fc, gc)) = eval(candidate) {
                if h == 0.0 {
                    return Ok(done(candidate, fc, gc));
                }
                if h < 0.0 {
                    lo = Some(candidate);
                    break;
                }
            }
        }
        let lo = lo.ok_or(ThetaError::NoRealSolution("no sign change below zero"))?;
        (lo, 0.0)
    } else {
        let mut hi = None;
        for k in 0..1100 {
            let candidate = 2.0_f64.powi(k);
            if !candidate.is_finite() {
                break;
            }
            if let Some((h, _, fc, gc)) = eval(candidate) {
                if h == 0.0 {
                    return Ok(done(candidate, fc, gc));
                }
                if h > 0.0 {
                    hi = Some(candidate);
                    break;
                }
            }
        }
        let hi = hi.ok_or(ThetaError::NoRealSolution("no sign change above zero"))?;
        (0.0, hi)
    };

    let scale = 1.0 + cost.abs();
    let mut t = if h0 > 0.0 { hi } else { lo };
    let mut residual = f64::INFINITY;
    for _ in 0..ROOT_MAX_ITERS {
        let Some((h, dh, fc, gc)) = eval(t) else {
            t = 0.5 * (lo + hi);
            continue;
        };
        residual = h.abs();
        if residual <= ROOT_TOL * scale {
            return Ok(done(t, fc, gc));
        }
        if h < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - h / dh;
        t = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()) {
            if let Some((h, _, fc, gc)) = eval(t) {
                if h.abs() <= 1e-9 * scale {
                    return Ok(done(t, fc, gc));
                }
                residual = h.abs();
            }
            break;
        }
    }
    Err(ThetaError::RootFind {
        iterations: ROOT_MAX_ITERS,
        residual,
    })
}

/// Scalar `θ` of the Bregman projection of `(f, g)` onto `f_i + g_j = C_ij`
/// for regularizer weight `1/γ`: applying `∇φ(f'_i) = ∇φ(f_i) + γθ` (and the
/// same for `g_j`) makes the constraint tight.
pub fn solve_theta(
    phi: Regularizer,
    varphi: Regularizer,
    f_i: f64,
    g_j: f64,
    cost: f64,
    gamma: f64,
) -> Result<f64, ThetaError> {
    let fc = phi
        .to_coord(f_i)
        .ok_or(ThetaError::NoRealSolution("f outside regularizer domain"))?;
    let gc = varphi
        .to_coord(g_j)
        .ok_or(ThetaError::NoRealSolution("g outside regularizer domain"))?;
    if !(gamma > 0.0) || !cost.is_finite() {
        return Err(ThetaError::NoRealSolution("invalid gamma or cost"));
    }
    full_step(phi, varphi, fc, gc, cost, gamma).map(|s| s.theta)
}
