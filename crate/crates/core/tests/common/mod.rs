#![allow(dead_code)]

use drot::random::{rng, simplex};
use drot::transfer::{PixelImage, Rgb};
use drot::{CostMatrix, Measure, ProblemInstance};
use rand::Rng;

/// Minimum cost over every vertex of the transportation polytope. A vertex
/// is a spanning tree of `m + n − 1` cells of the bipartite graph whose
/// (unique) tree flow is nonnegative.
pub fn brute_force_ot(a: &[f64], b: &[f64], cost: &[f64]) -> f64 {
    let (m, n) = (a.len(), b.len());
    let cells: Vec<usize> = (0..m * n).collect();
    let mut best = f64::INFINITY;
    for subset in combinations(&cells, m + n - 1) {
        if let Some(flow) = tree_flow(a, b, &subset, n) {
            let c: f64 = subset.iter().zip(&flow).map(|(&k, x)| x * cost[k]).sum();
            best = best.min(c);
        }
    }
    best
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn rec(items: &[usize], k: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - current.len() {
                break;
            }
            current.push(items[i]);
            rec(items, k, i + 1, current, out);
            current.pop();
        }
    }
    rec(items, k, 0, &mut current, &mut out);
    out
}

/// Flow on a spanning tree of cells meeting the marginals, found by
/// repeatedly settling leaves; `None` if the cells contain a cycle or the
/// flow is negative.
fn tree_flow(a: &[f64], b: &[f64], cells: &[usize], n: usize) -> Option<Vec<f64>> {
    let m = a.len();
    let mut supply: Vec<f64> = a.iter().chain(b).copied().collect();
    let ends: Vec<(usize, usize)> = cells.iter().map(|&k| (k / n, m + k % n)).collect();
    let mut degree = vec![0usize; m + n];
    for &(u, v) in &ends {
        degree[u] += 1;
        degree[v] += 1;
    }
    let mut flow = vec![f64::NAN; cells.len()];
    let mut settled = vec![false; cells.len()];
    for _ in 0..cells.len() {
        let (e, leaf) = ends.iter().enumerate().filter(|(e, _)| !settled[*e]).find_map(|(e, &(u, v))| {
            if degree[u] == 1 {
                Some((e, u))
            } else if degree[v] == 1 {
                Some((e, v))
            } else {
                None
            }
        })?;
        let (u, v) = ends[e];
        let other = if leaf == u { v } else { u };
        flow[e] = supply[leaf];
        supply[other] -= supply[leaf];
        supply[leaf] = 0.0;
        degree[u] -= 1;
        degree[v] -= 1;
        settled[e] = true;
    }
    if flow.iter().any(|&x| x < -1e-12) {
        return None;
    }
    Some(flow)
}

/// Balanced instance with `m × n` atoms and `C ~ U[0,1)`.
pub fn balanced_instance(seed: u64, m: usize, n: usize) -> ProblemInstance {
    let mut r = rng(seed);
    let a = simplex(&mut r, m);
    let b = simplex(&mut r, n);
    let c: Vec<f64> = (0..m * n).map(|_| r.random::<f64>()).collect();
    ProblemInstance::new(
        Measure::new(a).unwrap(),
        Measure::new(b).unwrap(),
        CostMatrix::new(m, n, c).unwrap(),
    )
    .unwrap()
}

/// Smooth synthetic photo-like image: two color gradients blended with a
/// soft disc, plus a little seeded noise.
pub fn synthetic_image(width: u32, height: u32, seed: u64, palette: [Rgb; 3]) -> PixelImage {
    let mut r = rng(seed);
    let mut pixels = Vec::with_capacity((width * height) as usize);
    for y in 0..height {
        for x in 0..width {
            let u = x as f64 / (width - 1) as f64;
            let v = y as f64 / (height - 1) as f64;
            let d = ((u - 0.6).powi(2) + (v - 0.4).powi(2)).sqrt();
            let disc = 1.0 / (1.0 + (12.0 * (d - 0.25)).exp());
            let mut p = [0.0; 3];
            for ch in 0..3 {
                let base = palette[0][ch] * (1.0 - u) + palette[1][ch] * u;
                let noise = (r.random::<f64>() - 0.5) * 0.04;
                p[ch] = (base * (1.0 - disc) + palette[2][ch] * disc + noise).clamp(0.0, 1.0);
            }
            pixels.push(p);
        }
    }
    PixelImage::new(width, height, pixels).unwrap()
}
