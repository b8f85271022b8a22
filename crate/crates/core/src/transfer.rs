//! Color transfer: both images are quantized into weighted color clouds by
//! k-means, the clouds are matched by a regularized transport plan under
//! squared Euclidean cost, and every source cluster is recolored by the
//! barycentric projection of its row of the plan.

use std::collections::HashSet;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{kkt_report, DiagnosticsReport};
use crate::error::{Error, Result};
use crate::problem::{sqeuclidean_cost, Measure, ProblemInstance, SolverConfig, TransportPlan};
use crate::random::rng;
use crate::solver::solve;

pub type Rgb = [f64; 3];

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_ENTROPY_SHIFT: f64 = 1e-3;

/// RGB image with channels in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<Rgb>,
}

impl PixelImage {
    pub fn new(width: u32, height: u32, pixels: Vec<Rgb>) -> Result<Self> {
        if pixels.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch {
                what: "image pixels",
                expected: width as usize * height as usize,
                found: pixels.len(),
            });
        }
        Ok(PixelImage { width, height, pixels })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let pixels = img.pixels().map(|p| p.0.map(|c| f64::from(c) / 255.0)).collect();
        PixelImage::new(img.width(), img.height(), pixels)
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let raw = self
            .pixels
            .iter()
            .flat_map(|p| p.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect();
        image::RgbImage::from_raw(self.width, self.height, raw).expect("pixel count matches dimensions")
    }

    /// Format chosen from the extension (PNG or JPEG).
    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_rgb8().save(path)?;
        Ok(())
    }

    /// Mean Euclidean RGB distance between corresponding pixels.
    pub fn mean_distance(&self, other: &PixelImage) -> Result<f64> {
        if self.pixels.len() != other.pixels.len() {
            return Err(Error::DimensionMismatch {
                what: "image pixels",
                expected: self.pixels.len(),
                found: other.pixels.len(),
            });
        }
        let total: f64 = self.pixels.iter().zip(&other.pixels).map(|(p, q)| dist2(p, q).sqrt()).sum();
        Ok(total / self.pixels.len().max(1) as f64)
    }
}

/// Color centers with their pixel fractions and the per-pixel assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedImage {
    pub centers: Vec<Rgb>,
    pub weights: Measure,
    pub assignment: Vec<usize>,
    pub width: u32,
    pub height: u32,
    pub iterations: usize,
}

fn dist2(p: &Rgb, q: &Rgb) -> f64 {
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)
}

fn nearest(p: &Rgb, centers: &[Rgb]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = dist2(p, center);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

#[cfg(feature = "parallel")]
fn assign(pixels: &[Rgb], centers: &[Rgb]) -> Vec<usize> {
    use rayon::prelude::*;
    pixels.par_iter().with_min_len(4096).map(|p| nearest(p, centers)).collect()
}

#[cfg(not(feature = "parallel"))]
fn assign(pixels: &[Rgb], centers: &[Rgb]) -> Vec<usize> {
    pixels.iter().map(|p| nearest(p, centers)).collect()
}

pub fn distinct_colors(pixels: &[Rgb]) -> usize {
    pixels.iter().map(|p| p.map(f64::to_bits)).collect::<HashSet<_>>().len()
}

fn kmeans_plus_plus(pixels: &[Rgb], k: usize, seed: u64) -> Vec<Rgb> {
    let mut r = rng(seed);
    let mut centers = vec![pixels[r.random_range(0..pixels.len())]];
    let mut d2: Vec<f64> = pixels.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = r.random::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).expect("more distinct colors than centers");
        for (idx, &d) in d2.iter().enumerate() {
            if d > 0.0 && target < d {
                pick = idx;
                break;
            }
            target -= d;
        }
        let c = pixels[pick];
        centers.push(c);
        for (d, p) in d2.iter_mut().zip(pixels) {
            *d = d.min(dist2(p, &c));
        }
    }
    centers
}

/// Lloyd's algorithm from a seeded k-means++ start, stopping when the
/// assignment is stable or after `max_iters` updates. Clusters left empty
/// by an update are dropped, so fewer than `k` centers may be returned.
/// The result has `width = pixels.len()` and `height = 1`.
pub fn kmeans_quantize(pixels: &[Rgb], k: usize, seed: u64, max_iters: usize) -> Result<QuantizedImage> {
    if pixels.is_empty() {
        return Err(Error::Quantize("empty image".into()));
    }
    if k == 0 {
        return Err(Error::Quantize("k must be at least 1".into()));
    }
    let distinct = distinct_colors(pixels);
    if k > distinct {
        return Err(Error::Quantize(format!("k = {k} exceeds the {distinct} distinct colors")));
    }
    let mut centers = kmeans_plus_plus(pixels, k, seed);
    let mut assignment = assign(pixels, &centers);
    let mut iterations = 0;
    loop {
        let mut sums = vec![[0.0; 3]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (p, &c) in pixels.iter().zip(&assignment) {
            counts[c] += 1;
            for ch in 0..3 {
                sums[c][ch] += p[ch] - centers[c][ch];
            }
        }
        let mut remap = vec![usize::MAX; centers.len()];
        let mut next = Vec::with_capacity(centers.len());
        for c in 0..centers.len() {
            if counts[c] > 0 {
                remap[c] = next.len();
                let mean = [0, 1, 2].map(|ch| centers[c][ch] + sums[c][ch] / counts[c] as f64);
                next.push(mean.map(|x| x.clamp(0.0, 1.0)));
            }
        }
        if iterations >= max_iters {
            for a in &mut assignment {
                *a = remap[*a];
            }
            centers = next;
            break;
        }
        centers = next;
        iterations += 1;
        let updated = assign(pixels, &centers);
        let stable = updated.iter().zip(&assignment).all(|(&u, &a)| remap[a] == u);
        assignment = updated;
        if stable {
            break;
        }
    }
    let mut counts = vec![0usize; centers.len()];
    for &c in &assignment {
        counts[c] += 1;
    }
    // Recomputing after the final assignment can empty a cluster once more.
    if counts.contains(&0) {
        let mut remap = vec![usize::MAX; centers.len()];
        let mut kept = Vec::new();
        for c in 0..centers.len() {
            if counts[c] > 0 {
                remap[c] = kept.len();
                kept.push(centers[c]);
            }
        }
        for a in &mut assignment {
            *a = remap[*a];
        }
        centers = kept;
        counts.retain(|&c| c > 0);
    }
    let total = pixels.len() as f64;
    let weights = Measure::new(counts.iter().map(|&c| c as f64 / total).collect())?;
    Ok(QuantizedImage {
        centers,
        weights,
        assignment,
        width: pixels.len() as u32,
        height: 1,
        iterations,
    })
}

pub fn quantize_image(image: &PixelImage, k: usize, seed: u64, max_iters: usize) -> Result<QuantizedImage> {
    let mut q = kmeans_quantize(&image.pixels, k, seed, max_iters)?;
    q.width = image.width;
    q.height = image.height;
    Ok(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub points: Vec<Rgb>,
    /// Rows without mass, left at their source point.
    pub zero_rows: Vec<usize>,
}

/// Maps row `i` to `Σ_j P_ij y_j / Σ_j P_ij`; rows without mass keep
/// `sources[i]` and are reported in `zero_rows`.
pub fn barycentric_project(plan: &TransportPlan, sources: &[Rgb], targets: &[Rgb]) -> Result<Projection> {
    if plan.cols() != targets.len() {
        return Err(Error::DimensionMismatch {
            what: "barycentric targets",
            expected: plan.cols(),
            found: targets.len(),
        });
    }
    if plan.rows() != sources.len() {
        return Err(Error::DimensionMismatch {
            what: "barycentric sources",
            expected: plan.rows(),
            found: sources.len(),
        });
    }
    let mut sums = vec![[0.0; 3]; plan.rows()];
    let mut mass = vec![0.0; plan.rows()];
    for &(i, j, p) in plan.entries() {
        mass[i] += p;
        for ch in 0..3 {
            sums[i][ch] += p * targets[j][ch];
        }
    }
    let mut zero_rows = Vec::new();
    let points = (0..plan.rows())
        .map(|i| {
            if mass[i] > 0.0 {
                sums[i].map(|s| s / mass[i])
            } else {
                zero_rows.push(i);
                sources[i]
            }
        })
        .collect();
    Ok(Projection { points, zero_rows })
}

/// Recorded next to every transferred image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMetadata {
    pub k: usize,
    pub k_source: usize,
    pub k_target: usize,
    pub seed: u64,
    pub config: SolverConfig,
    pub converged: bool,
    pub sweeps: usize,
    pub zero_rows: Vec<usize>,
    pub diagnostics: DiagnosticsReport,
}

#[derive(Debug, Clone)]
pub struct TransferOutput {
    pub image: PixelImage,
    pub metadata: TransferMetadata,
}

/// Quantizes both images (k is capped at each image's number of distinct
/// colors), solves the regularized problem between the color clouds and
/// recolors every source pixel with its cluster's projected color.
pub fn color_transfer(
    source: &PixelImage,
    target: &PixelImage,
    k: usize,
    config: &SolverConfig,
    seed: u64,
) -> Result<TransferOutput> {
    let ks = k.min(distinct_colors(&source.pixels)).max(1);
    let kt = k.min(distinct_colors(&target.pixels)).max(1);
    let qs = quantize_image(source, ks, seed, DEFAULT_MAX_ITERS).map_err(|e| e.in_stage("quantize source"))?;
    let qt = quantize_image(target, kt, seed, DEFAULT_MAX_ITERS).map_err(|e| e.in_stage("quantize target"))?;
    let cost = sqeuclidean_cost(&qs.centers, &qt.centers).map_err(|e| e.in_stage("cost"))?;
    let problem =
        ProblemInstance::new(qs.weights.clone(), qt.weights.clone(), cost).map_err(|e| e.in_stage("problem"))?;
    let result = solve(&problem, config).map_err(|e| e.in_stage("solve"))?;
    let report = kkt_report(&problem, config, &result);
    let projection =
        barycentric_project(&result.plan, &qs.centers, &qt.centers).map_err(|e| e.in_stage("projection"))?;
    let pixels = qs
        .assignment
        .iter()
        .map(|&c| projection.points[c].map(|x| x.clamp(0.0, 1.0)))
        .collect();
    Ok(TransferOutput {
        image: PixelImage::new(source.width, source.height, pixels)?,
        metadata: TransferMetadata {
            k,
            k_source: qs.centers.len(),
            k_target: qt.centers.len(),
            seed,
            config: config.clone(),
            converged: result.converged,
            sweeps: result.sweeps,
            zero_rows: projection.zero_rows,
            diagnostics: report,
        },
    })
}
