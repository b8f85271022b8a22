//! Acceptance suite. Runs every criterion, prints one `PASS`/`FAIL` line
//! each with the measured values and runtime, and exits non-zero when any
//! criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::{balanced_instance, brute_force_ot, synthetic_image};
use drot::diagnostics::{kkt_report, rate_fit, support_containment, SUPPORT_TOL};
use drot::exact::{solve_drot_dense_oracle, solve_exact_ot};
use drot::experiments::{cell_config, gaussian_benchmark, gaussian_unit_cost, rate};
use drot::random::{rng, seeded_simplex_instance};
use drot::transfer::{color_transfer, DEFAULT_SEED};
use drot::{solve, solve_theta, Regularizer, SolverConfig};
use rand::Rng;

fn report(id: u32, name: &str, pass: bool, detail: String, elapsed: Duration, budget: Duration) -> bool {
    let ok = pass && elapsed < budget;
    println!(
        "criterion {id:>2} {} {name}: {detail} [{:.2}s of {}s]",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    ok
}

fn domain_point(reg: Regularizer, r: &mut drot::random::Rng) -> f64 {
    match reg {
        Regularizer::Quadratic => r.random_range(-20.0..20.0),
        Regularizer::Entropy => 10f64.powf(r.random_range(-3.0..1.0)),
        Regularizer::Exponential => r.random_range(-20.0..8.0),
    }
}

fn criterion_01_regularizer_calculus() -> bool {
    let start = Instant::now();
    let mut worst = [0.0f64; 3];
    for reg in Regularizer::ALL {
        let mut r = rng(1);
        for _ in 0..1000 {
            let v = domain_point(reg, &mut r);
            let g = reg.grad(&[v]).unwrap()[0];
            let h = 1e-4 * v.abs().max(if reg == Regularizer::Entropy { 0.0 } else { 1.0 });
            let fd = (reg.value(&[v + h]).unwrap() - reg.value(&[v - h]).unwrap()) / (2.0 * h);
            worst[0] = worst[0].max((fd - g).abs() / g.abs().max(1.0) / 1e-6);
            let back = reg.grad_inverse(&[g]).unwrap()[0];
            worst[1] = worst[1].max((back - v).abs() / v.abs().max(1.0) / 1e-10);
            let lhs = reg.conjugate(&[g]).unwrap();
            let rhs = v * g - reg.value(&[v]).unwrap();
            worst[2] = worst[2].max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0) / 1e-9);
        }
    }
    let pass = worst.iter().all(|&w| w <= 1.0);
    let detail = format!(
        "worst error / tolerance: gradient {:.3}, inverse {:.3}, conjugacy {:.3}",
        worst[0], worst[1], worst[2]
    );
    report(1, "regularizer calculus", pass, detail, start.elapsed(), Duration::from_secs(5))
}

fn criterion_02_projection_equality() -> bool {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut failures = 0;
    for phi in Regularizer::ALL {
        for varphi in Regularizer::ALL {
            let mut r = rng(2);
            for _ in 0..10_000 {
                let f = if phi == Regularizer::Entropy { 10f64.powf(r.random_range(-3.0..0.7)) } else { r.random_range(-5.0..5.0) };
                let g = if varphi == Regularizer::Entropy { 10f64.powf(r.random_range(-3.0..0.7)) } else { r.random_range(-5.0..5.0) };
                let c = r.random_range(0.0..10.0);
                let gamma = 10f64.powf(r.random_range(-2.0..3.0));
                let step = solve_theta(phi, varphi, f, g, c, gamma).ok().and_then(|theta| {
                    Some((phi.bregman_step(f, theta, gamma)?, varphi.bregman_step(g, theta, gamma)?))
                });
                match step {
                    Some((f2, g2)) => worst = worst.max((f2 + g2 - c).abs() / c.max(1.0)),
                    None => failures += 1,
                }
            }
        }
    }
    let pass = worst <= 1e-10 && failures == 0;
    let detail = format!("9 pairings x 10000 tuples, worst |f'+g'-C|/max(1,C) = {worst:.2e}, failed solves {failures}");
    report(2, "projection equality", pass, detail, start.elapsed(), Duration::from_secs(10))
}

fn criterion_03_kkt_and_strong_duality() -> bool {
    let start = Instant::now();
    let config = SolverConfig::symmetric(100.0, Regularizer::Quadratic);
    let mut worst = [0.0f64; 4];
    let mut converged = 0;
    for k in 0..50 {
        let p = seeded_simplex_instance(3, k, 20, 20).unwrap();
        let r = solve(&p, &config).unwrap();
        if !r.converged {
            continue;
        }
        converged += 1;
        let d = kkt_report(&p, &config, &r);
        worst[0] = worst[0].max(d.duality_gap / (1e-6 * (1.0 + r.primal_objective.abs())));
        worst[1] = worst[1].max(d.kkt_stationarity_f.max(d.kkt_stationarity_g) / (1e-6 * config.gamma));
        worst[2] = worst[2].max(d.complementary_slackness / 1e-6);
        worst[3] = worst[3].max(d.feasibility_error / 1e-8);
    }
    let pass = converged == 50 && worst.iter().all(|&w| w <= 1.0);
    let detail = format!(
        "{converged}/50 converged; worst error / tolerance: gap {:.3}, stationarity {:.3}, slackness {:.3}, feasibility {:.3}",
        worst[0], worst[1], worst[2], worst[3]
    );
    report(3, "KKT and strong duality", pass, detail, start.elapsed(), Duration::from_secs(120))
}

fn criterion_04_oracle_equivalence() -> bool {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut unconverged = 0;
    let mut budget_limited = 0;
    for k in 0..20 {
        let p = seeded_simplex_instance(4, k, 5, 5).unwrap();
        for gamma in [1.0, 10.0, 100.0] {
            let config = SolverConfig::symmetric(gamma, Regularizer::Quadratic).with_tol(1e-12);
            let pnf = solve(&p, &config).unwrap();
            let oracle = solve_drot_dense_oracle(&p, &config, 100_000).unwrap();
            unconverged += usize::from(!pnf.converged);
            budget_limited += usize::from(!oracle.converged);
            let diff = (pnf.primal_objective - oracle.dual_objective).abs();
            worst = worst.max(diff / (1.0 + oracle.dual_objective.abs()));
        }
    }
    let pass = unconverged == 0 && worst <= 1e-6;
    let detail = format!(
        "60 runs, worst relative objective difference {worst:.2e}, unconverged PnF solves {unconverged}, \
         oracle runs stopped by step budget {budget_limited}"
    );
    report(4, "oracle equivalence", pass, detail, start.elapsed(), Duration::from_secs(60))
}

fn criterion_05_inverse_gamma_rate() -> bool {
    let start = Instant::now();
    let problem = gaussian_unit_cost(101).unwrap();
    let gammas = [1e1, 1e2, 1e3, 1e4];
    let rows = rate(&problem, &gammas, &[Regularizer::Quadratic], 1e-10).unwrap();
    let column = |f: fn(&drot::experiments::RateRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let slopes = [
        rate_fit(&gammas, &column(|r| r.objective_gap)).unwrap(),
        rate_fit(&gammas, &column(|r| r.cost_gap)).unwrap(),
        rate_fit(&gammas, &column(|r| r.marginal_gap)).unwrap(),
    ];
    let pass = rows.iter().all(|r| r.converged) && slopes.iter().all(|s| (-1.3..=-0.7).contains(s));
    let detail = format!(
        "slopes OT-DROT {:.3}, |<C,P*-P>| {:.3}, |a-P1| {:.3}",
        slopes[0], slopes[1], slopes[2]
    );
    report(5, "inverse gamma rate", pass, detail, start.elapsed(), Duration::from_secs(300))
}

fn criterion_06_mass_laws() -> bool {
    let start = Instant::now();
    let gamma = 100.0;
    let mut exp_min = f64::INFINITY;
    let mut ent_destroyed = 0.0f64;
    let mut quad_both = 0;
    let mut unconverged = 0;
    for k in 0..10 {
        let p = seeded_simplex_instance(0, k, 100, 100).unwrap();
        for reg in Regularizer::ALL {
            let config = cell_config(reg, gamma, 1e-8).with_max_sweeps(1_000_000);
            let r = solve(&p, &config).unwrap();
            unconverged += usize::from(!r.converged);
            let d = kkt_report(&p, &config, &r);
            match reg {
                Regularizer::Exponential => {
                    let m = d.marginal_dev_a.iter().chain(&d.marginal_dev_b).fold(f64::INFINITY, |m, &x| m.min(x));
                    exp_min = exp_min.min(m);
                }
                Regularizer::Entropy => ent_destroyed = ent_destroyed.max(d.mass_destroyed.max(d.mass_destroyed_b)),
                Regularizer::Quadratic => {
                    let devs = d.marginal_dev_a.iter().chain(&d.marginal_dev_b);
                    let pos = devs.clone().any(|&x| x > 1e-4);
                    let neg = devs.clone().any(|&x| x < -1e-4);
                    quad_both += usize::from(pos && neg);
                }
            }
        }
    }
    let pass = unconverged == 0 && exp_min >= -1e-8 && ent_destroyed <= 1e-6 && quad_both >= 1;
    let detail = format!(
        "gamma {gamma}: exponential min deviation {exp_min:.2e}, entropy max destroyed {ent_destroyed:.2e}, \
         quadratic two-sided on {quad_both}/10, unconverged {unconverged}"
    );
    report(6, "mass laws", pass, detail, start.elapsed(), Duration::from_secs(600))
}

fn criterion_07_sparsity_and_support() -> bool {
    let start = Instant::now();
    let config = SolverConfig::symmetric(1e4, Regularizer::Quadratic)
        .with_tol(1e-13)
        .with_max_sweeps(3_000_000);
    let mut max_exact = 0;
    let mut sparser = 0;
    let mut contained = 0;
    let mut unconverged = 0;
    for k in 0..10 {
        let p = seeded_simplex_instance(0, k, 100, 100).unwrap();
        let exact = solve_exact_ot(&p).unwrap();
        let exact_nnz = exact.plan.support_size(SUPPORT_TOL);
        max_exact = max_exact.max(exact_nnz);
        let r = solve(&p, &config).unwrap();
        unconverged += usize::from(!r.converged);
        sparser += usize::from(r.plan.support_size(SUPPORT_TOL) <= exact_nnz);
        contained += usize::from(support_containment(&r.plan, &exact.plan, SUPPORT_TOL).unwrap());
    }
    let pass = max_exact <= 199 && sparser == 10 && contained >= 9;
    let detail = format!(
        "max exact nnz {max_exact}, DROT nnz <= exact on {sparser}/10, containment on {contained}/10, unconverged {unconverged}"
    );
    report(7, "sparsity and support", pass, detail, start.elapsed(), Duration::from_secs(600))
}

fn criterion_08_exact_ot() -> bool {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for k in 0..100 {
        let (m, n) = (1 + (k as usize % 4), 1 + ((k as usize / 4) % 4));
        let p = balanced_instance(8_000 + k, m, n);
        let exact = solve_exact_ot(&p).unwrap();
        let brute = brute_force_ot(p.a().weights(), p.b().weights(), p.cost().as_slice());
        worst = worst.max((exact.cost - brute).abs());
    }
    let pass = worst <= 1e-12;
    let detail = format!("100 instances up to 4x4, worst |simplex - enumeration| {worst:.2e}");
    report(8, "exact OT", pass, detail, start.elapsed(), Duration::from_secs(30))
}

fn criterion_09_color_transfer() -> bool {
    let start = Instant::now();
    let warm = [[0.9, 0.5, 0.2], [0.8, 0.2, 0.3], [0.3, 0.1, 0.1]];
    let cool = [[0.1, 0.3, 0.7], [0.2, 0.7, 0.6], [0.9, 0.9, 0.8]];
    let source = synthetic_image(64, 48, 1, warm);
    let target = synthetic_image(64, 48, 2, cool);

    let config = SolverConfig::symmetric(1e4, Regularizer::Quadratic);
    let identity = color_transfer(&source, &source, 8, &config, DEFAULT_SEED).unwrap();
    let self_shift = identity.image.mean_distance(&source).unwrap();

    let outputs: Vec<_> = [0.1, 1.0, 10.0]
        .iter()
        .map(|&gamma| {
            let config = cell_config(Regularizer::Entropy, gamma, 1e-8);
            color_transfer(&source, &target, 64, &config, DEFAULT_SEED).unwrap()
        })
        .collect();
    let mut spread = 0.0f64;
    for i in 0..outputs.len() {
        for j in i + 1..outputs.len() {
            spread = spread.max(outputs[i].image.mean_distance(&outputs[j].image).unwrap());
        }
    }
    let converged = identity.metadata.converged && outputs.iter().all(|o| o.metadata.converged);
    let pass = converged && self_shift < 0.05 && spread < 0.05;
    let detail = format!(
        "self-transfer mean shift {self_shift:.4}, entropy gamma sweep max pairwise difference {spread:.4}, converged {converged}"
    );
    report(9, "color transfer", pass, detail, start.elapsed(), Duration::from_secs(300))
}

fn criterion_10_gaussian_performance() -> bool {
    let start = Instant::now();
    let p = gaussian_benchmark(501).unwrap();
    let config = SolverConfig::symmetric(1000.0, Regularizer::Quadratic);
    let r = solve(&p, &config).unwrap();
    let elapsed = start.elapsed();
    let pass = r.converged && r.feasibility_error <= 1e-8;
    let detail = format!(
        "n = 501, gamma = 1000: {} sweeps, feasibility {:.2e}, converged {}",
        r.sweeps, r.feasibility_error, r.converged
    );
    report(10, "Gaussian performance", pass, detail, elapsed, Duration::from_secs(120))
}

fn main() {
    let criteria: [fn() -> bool; 10] = [
        criterion_01_regularizer_calculus,
        criterion_02_projection_equality,
        criterion_03_kkt_and_strong_duality,
        criterion_04_oracle_equivalence,
        criterion_05_inverse_gamma_rate,
        criterion_06_mass_laws,
        criterion_07_sparsity_and_support,
        criterion_08_exact_ot,
        criterion_09_color_transfer,
        criterion_10_gaussian_performance,
    ];
    let passed = criteria.iter().filter(|c| c()).count();
    println!("acceptance: {passed}/{} criteria passed", criteria.len());
    if passed != criteria.len() {
        std::process::exit(1);
    }
}
