//! Two-dimensional folded-boundary benchmark.
//!
//! A curve `y = Gamma(x)` splits the rectangle `[0, 2 pi] x [-0.7, 3]` into
//! a low-grade region above and a high-grade region below. The attribute
//! decreases with distance from the curve above it and increases below it,
//! with a jump of `delta` across the curve. Points, vertical line samples and
//! inference blocks follow fixed published layouts.

use std::f64::consts::{PI, TAU};
use std::str::FromStr;

use rayon::prelude::*;

use crate::covariance::SupportSample;
use crate::error::{Error, Result};
use crate::gp::{self, PosteriorField};
use crate::hyperopt::{self, OptimConfig};
use crate::kernels::KernelFamily;

pub const X_RANGE: (f64, f64) = (0.0, TAU);
pub const Y_RANGE: (f64, f64) = (-0.7, 3.0);
pub const KAPPA: f64 = 2.3;
pub const DELTA: f64 = 0.25;
pub const POLYLINE_SEGMENTS: usize = 10_000;
pub const GRID_NX: usize = 2000;
pub const GRID_NY: usize = 1200;
pub const MASK_RADIUS: f64 = 1.0;
pub const QUAD_TOL: f64 = 1e-7;

pub fn gamma1(x: f64) -> f64 {
    1.0 + (0.1135 * x).sin() + (0.85 * x + PI / 5.0).cos()
}

pub fn gamma2(x: f64) -> f64 {
    gamma1(2.0 * x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Boundary {
    Fold1,
    Fold2,
}

impl Boundary {
    pub fn from_index(i: u32) -> Result<Self> {
        match i {
            1 => Ok(Boundary::Fold1),
            2 => Ok(Boundary::Fold2),
            _ => Err(Error::InvalidInput(format!("unknown scenario {i}, expected 1 or 2"))),
        }
    }

    pub fn index(self) -> u32 {
        match self {
            Boundary::Fold1 => 1,
            Boundary::Fold2 => 2,
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Boundary::Fold1 => gamma1(x),
            Boundary::Fold2 => gamma2(x),
        }
    }
}

// Fine polyline grouped into chunks with bounding boxes for pruning.
#[derive(Clone, Debug)]
struct Polyline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    groups: Vec<(usize, usize, [f64; 4])>,
}

const GROUP: usize = 50;

impl Polyline {
    fn new(b: Boundary, segments: usize) -> Self {
        let (x0, x1) = X_RANGE;
        let xs: Vec<f64> = (0..=segments).map(|i| x0 + (x1 - x0) * i as f64 / segments as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| b.eval(x)).collect();
        let mut groups = Vec::new();
        let mut s = 0;
        while s < segments {
            let e = (s + GROUP).min(segments);
            let mut bb = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
            for k in s..=e {
                bb[0] = bb[0].min(xs[k]);
                bb[1] = bb[1].max(xs[k]);
                bb[2] = bb[2].min(ys[k]);
                bb[3] = bb[3].max(ys[k]);
            }
            groups.push((s, e, bb));
            s = e;
        }
        Polyline { xs, ys, groups }
    }

    fn seg_dist2(&self, k: usize, px: f64, py: f64) -> f64 {
        let (ax, ay, bx, by) = (self.xs[k], self.ys[k], self.xs[k + 1], self.ys[k + 1]);
        let (dx, dy) = (bx - ax, by - ay);
        let t = (((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
        let (qx, qy) = (ax + t * dx - px, ay + t * dy - py);
        qx * qx + qy * qy
    }

    fn group_dist2(&self, g: usize, px: f64, py: f64, best: f64) -> f64 {
        let (s, e, bb) = self.groups[g];
        let gx = (bb[0] - px).max(px - bb[1]).max(0.0);
        let gy = (bb[2] - py).max(py - bb[3]).max(0.0);
        if gx * gx + gy * gy >= best {
            return best;
        }
        (s..e).fold(best, |m, k| m.min(self.seg_dist2(k, px, py)))
    }

    fn distance(&self, px: f64, py: f64) -> f64 {
        let n = self.groups.len();
        let (x0, x1) = X_RANGE;
        let start = (((px - x0) / (x1 - x0)) * n as f64).floor().clamp(0.0, (n - 1) as f64) as usize;
        let mut best = self.group_dist2(start, px, py, f64::INFINITY);
        let mut lo = start;
        let mut hi = start + 1;
        loop {
            let mut moved = false;
            if lo > 0 {
                let gap = (px - self.groups[lo - 1].2[1]).max(0.0);
                if gap * gap < best {
                    lo -= 1;
                    best = self.group_dist2(lo, px, py, best);
                    moved = true;
                }
            }
            if hi < n {
                let gap = (self.groups[hi].2[0] - px).max(0.0);
                if gap * gap < best {
                    best = self.group_dist2(hi, px, py, best);
                    hi += 1;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
        best.sqrt()
    }
}

/// One benchmark configuration with its distance map constants.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub boundary: Boundary,
    pub kappa: f64,
    pub delta: f64,
    /// Largest distance to the curve over the region above it.
    pub d_max: f64,
    /// Decision threshold separating the two regions.
    pub tau: f64,
    polyline: Polyline,
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> + Clone {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

impl Scenario {
    pub fn new(boundary: Boundary) -> Self {
        Self::with_grid(boundary, GRID_NX, GRID_NY)
    }

    /// Scenario with `d_max` and `tau` evaluated on an `nx x ny` node grid.
    pub fn with_grid(boundary: Boundary, nx: usize, ny: usize) -> Self {
        let polyline = Polyline::new(boundary, POLYLINE_SEGMENTS);
        let mut scn = Scenario { boundary, kappa: KAPPA, delta: DELTA, d_max: f64::NAN, tau: f64::NAN, polyline };
        let nodes: Vec<(f64, f64, bool, f64)> = linspace(X_RANGE.0, X_RANGE.1, nx)
            .collect::<Vec<_>>()
            .par_iter()
            .flat_map_iter(|&x| {
                let g = boundary.eval(x);
                let poly = &scn.polyline;
                linspace(Y_RANGE.0, Y_RANGE.1, ny).map(move |y| (x, y, y > g, poly.distance(x, y)))
            })
            .collect();
        scn.d_max = nodes.iter().filter(|n| n.2).map(|n| n.3).fold(0.0, f64::max);
        let values: Vec<(bool, f64)> = nodes.iter().map(|n| (n.2, scn.value_from(n.2, n.3))).collect();
        scn.tau = decision_threshold(&values);
        scn
    }

    pub fn gamma(&self, x: f64) -> f64 {
        self.boundary.eval(x)
    }

    /// Whether `(x, y)` lies in the region above the curve.
    pub fn in_upper(&self, x: f64, y: f64) -> bool {
        y > self.gamma(x)
    }

    pub fn distance(&self, x: f64, y: f64) -> f64 {
        self.polyline.distance(x, y)
    }

    fn value_from(&self, upper: bool, d: f64) -> f64 {
        if upper {
            self.d_max - d
        } else {
            self.kappa * d + self.d_max + self.delta
        }
    }

    pub fn target(&self, x: f64, y: f64) -> f64 {
        self.value_from(self.in_upper(x, y), self.distance(x, y))
    }

    /// Average of the target over a 2-D support (point, vertical or
    /// horizontal interval, or rectangle).
    pub fn support_average(&self, s: &SupportSample) -> f64 {
        let (ax, ay) = (s.centroid[0], s.centroid[1]);
        let (hx, hy) = (s.extent[0], s.extent[1]);
        let column = |x: f64| {
            if hy > 0.0 {
                self.column_average(x, ay - 0.5 * hy, ay + 0.5 * hy)
            } else {
                self.target(x, ay)
            }
        };
        if hx > 0.0 {
            adaptive_simpson(&column, ax - 0.5 * hx, ax + 0.5 * hx, QUAD_TOL * hx) / hx
        } else {
            column(ax)
        }
    }

    // Mean over [y0, y1] at fixed x, split at the curve.
    fn column_average(&self, x: f64, y0: f64, y1: f64) -> f64 {
        let g = self.gamma(x);
        let f = |y: f64| self.target(x, y);
        let h = y1 - y0;
        let total = if g > y0 && g < y1 {
            // lower piece includes the curve itself
            let below = |y: f64| self.value_from(false, self.distance(x, y));
            let above = |y: f64| self.value_from(true, self.distance(x, y));
            adaptive_simpson(&below, y0, g, QUAD_TOL * h) + adaptive_simpson(&above, g, y1, QUAD_TOL * h)
        } else {
            adaptive_simpson(&f, y0, y1, QUAD_TOL * h)
        };
        total / h
    }
}

/// `tau = w max_upper f + (1 - w) min_lower f` with `w = w1 / (w1 + w2)`
/// and `w_i` the mean of `f` over each region. Input pairs are
/// `(in_upper, value)`.
pub fn decision_threshold(values: &[(bool, f64)]) -> f64 {
    let mut sum = [0.0; 2];
    let mut n = [0usize; 2];
    let mut max_upper = f64::NEG_INFINITY;
    let mut min_lower = f64::INFINITY;
    for &(upper, v) in values {
        let r = if upper { 0 } else { 1 };
        sum[r] += v;
        n[r] += 1;
        if upper {
            max_upper = max_upper.max(v);
        } else {
            min_lower = min_lower.min(v);
        }
    }
    let w1 = sum[0] / n[0] as f64;
    let w2 = sum[1] / n[1] as f64;
    let w = w1 / (w1 + w2);
    w * max_upper + (1.0 - w) * min_lower
}

fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let err = left + right - whole;
        if depth == 0 || err.abs() <= 15.0 * tol {
            return left + right + err / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    // start from four panels so that narrow features are not skipped
    let n = 4;
    let h = (b - a) / n as f64;
    (0..n)
        .map(|i| {
            let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
            rec(f, x0, x1, f0, fm, f1, simpson(f0, fm, f1, x0, x1), tol / n as f64, 40)
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Points,
    Lines,
    Blocks,
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "points" => Ok(Layout::Points),
            "lines" => Ok(Layout::Lines),
            "blocks" => Ok(Layout::Blocks),
            _ => Err(Error::UnknownLayout(s.to_string())),
        }
    }
}

/// Inference block lattice: `nx x ny` square cells, x-major ordering.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockGrid {
    pub x0: f64,
    pub y0: f64,
    pub size: f64,
    pub nx: usize,
    pub ny: usize,
}

impl BlockGrid {
    pub const STANDARD: BlockGrid = BlockGrid { x0: 0.125, y0: -0.575, size: 0.25, nx: 26, ny: 10 };

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + self.size * i as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y0 + self.size * j as f64
    }

    pub fn cells(&self) -> Vec<SupportSample> {
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for i in 0..self.nx {
            for j in 0..self.ny {
                out.push(SupportSample::new(vec![self.x(i), self.y(j)], vec![self.size, self.size], 0.0));
            }
        }
        out
    }
}

fn point_geometry() -> Vec<SupportSample> {
    (1..=22)
        .map(|i| {
            let (x, y) = if i <= 11 { (0.5, 1.0 + 0.1 * (i - 1) as f64) } else { (5.8, 1.6 + 0.1 * (i - 12) as f64) };
            SupportSample::new(vec![x, y], vec![0.0, 0.1], 0.0)
        })
        .collect()
}

fn line_geometry(b: Boundary) -> Vec<SupportSample> {
    let rows: &[(f64, f64, f64)] = match b {
        Boundary::Fold1 => &[(1.8, 0.65, 1.0), (3.0, -0.25, 0.5), (3.0, 0.5, 1.0), (4.0, 0.6, 1.0), (4.75, 2.0, 1.0)],
        Boundary::Fold2 => &[
            (1.2, 0.25, 0.5),
            (1.2, 0.75, 0.5),
            (1.2, 1.25, 0.5),
            (2.0, 1.15, 1.0),
            (2.0, 1.9, 0.5),
            (3.0, 1.2, 1.0),
            (3.0, 2.2, 1.0),
            (4.0, 1.1, 1.0),
            (4.0, 2.1, 1.0),
            (5.0, 1.0, 0.5),
            (5.0, 1.5, 0.5),
        ],
    };
    rows.iter().map(|&(x, y, h)| SupportSample::new(vec![x, y], vec![0.0, h], 0.0)).collect()
}

/// Published sample layout with values averaged over each support.
pub fn sample_layout(scn: &Scenario, which: Layout) -> Vec<SupportSample> {
    let geometry = match which {
        Layout::Points => point_geometry(),
        Layout::Lines => line_geometry(scn.boundary),
        Layout::Blocks => BlockGrid::STANDARD.cells(),
    };
    geometry
        .into_par_iter()
        .map(|mut s| {
            s.value = scn.support_average(&s);
            s
        })
        .collect()
}

/// Per-column height where the field crosses `tau`, scanning down from the
/// top row. `mean` is laid out like [`BlockGrid::cells`].
pub fn extract_boundary(mean: &[f64], grid: &BlockGrid, tau: f64) -> Vec<Option<f64>> {
    (0..grid.nx)
        .map(|i| {
            for j in (0..grid.ny.saturating_sub(1)).rev() {
                let upper = mean[grid.index(i, j + 1)] - tau;
                let lower = mean[grid.index(i, j)] - tau;
                if upper == 0.0 {
                    return Some(grid.y(j + 1));
                }
                if (upper < 0.0) != (lower < 0.0) || lower == 0.0 {
                    let (yu, yl) = (grid.y(j + 1), grid.y(j));
                    return Some(yu + (tau - mean[grid.index(i, j + 1)]) * (yl - yu) / (lower - upper));
                }
            }
            None
        })
        .collect()
}

/// RMSE between extracted heights and the true curve over non-missing columns.
pub fn boundary_rmse(estimate: &[Option<f64>], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: estimate.len() });
    }
    let sq: Vec<f64> = estimate.iter().zip(truth).filter_map(|(e, t)| e.map(|e| (e - t) * (e - t))).collect();
    if sq.is_empty() {
        return Err(Error::EmptyComparison);
    }
    Ok((sq.iter().sum::<f64>() / sq.len() as f64).sqrt())
}

/// RMSE over cells where `mask` is set.
pub fn field_rmse(field: &[f64], target: &[f64], mask: &[bool]) -> Result<f64> {
    if field.len() != target.len() || mask.len() != target.len() {
        return Err(Error::DimensionMismatch { expected: target.len(), got: field.len().min(mask.len()) });
    }
    let sq: Vec<f64> = field
        .iter()
        .zip(target)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((f, t), _)| (f - t) * (f - t))
        .collect();
    if sq.is_empty() {
        return Err(Error::EmptyComparison);
    }
    Ok((sq.iter().sum::<f64>() / sq.len() as f64).sqrt())
}

/// Distance from a point to the axis-aligned footprint of a 2-D support.
pub fn footprint_distance(s: &SupportSample, x: f64, y: f64) -> f64 {
    let dx = ((x - s.centroid[0]).abs() - 0.5 * s.extent[0]).max(0.0);
    let dy = ((y - s.centroid[1]).abs() - 0.5 * s.extent[1]).max(0.0);
    dx.hypot(dy)
}

/// Cells whose centre lies within `radius` of any training footprint.
pub fn near_interface_mask(cells: &[SupportSample], training: &[SupportSample], radius: f64) -> Vec<bool> {
    cells
        .iter()
        .map(|c| training.iter().any(|s| footprint_distance(s, c.centroid[0], c.centroid[1]) <= radius))
        .collect()
}

/// Outcome of one modelling configuration.
#[derive(Clone, Debug)]
pub struct ArmResult {
    pub kernel: crate::covariance::KernelSpec,
    pub lml: f64,
    pub field: PosteriorField,
    pub boundary: Vec<Option<f64>>,
    pub boundary_rmse: f64,
    pub value_rmse: f64,
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub scenario: Boundary,
    pub tau: f64,
    pub seed: u64,
    /// Blocks with their true average values.
    pub blocks: Vec<SupportSample>,
    pub mask: Vec<bool>,
    pub integral: ArmResult,
    pub point: ArmResult,
}

fn run_arm(
    family: KernelFamily,
    training: &[SupportSample],
    query: &[SupportSample],
    truth: &[f64],
    mask: &[bool],
    tau: f64,
    gamma: &[f64],
    opt: &OptimConfig,
) -> Result<ArmResult> {
    let learned = hyperopt::optimize_detailed(family, training, None, opt)?;
    let model = gp::fit(&learned.kernel, training, None)?;
    let field = model.predict(query, false)?;
    let boundary = extract_boundary(&field.mean, &BlockGrid::STANDARD, tau);
    Ok(ArmResult {
        boundary_rmse: boundary_rmse(&boundary, gamma)?,
        value_rmse: field_rmse(&field.mean, truth, mask)?,
        kernel: learned.kernel,
        lml: learned.lml,
        field,
        boundary,
    })
}

/// Integral arm (line and block supports honoured) against the point arm
/// (every support collapsed to its centroid) on one scenario.
pub fn run_experiment(scn: &Scenario, family: KernelFamily, opt: &OptimConfig) -> Result<Experiment> {
    let grid = BlockGrid::STANDARD;
    let mut training = sample_layout(scn, Layout::Points);
    training.extend(sample_layout(scn, Layout::Lines));
    let blocks = sample_layout(scn, Layout::Blocks);
    let truth: Vec<f64> = blocks.iter().map(|b| b.value).collect();
    let gamma: Vec<f64> = (0..grid.nx).map(|i| scn.gamma(grid.x(i))).collect();
    let mask = near_interface_mask(&blocks, &training, MASK_RADIUS);

    let integral = run_arm(family, &training, &blocks, &truth, &mask, scn.tau, &gamma, opt)?;
    let collapsed: Vec<SupportSample> = training.iter().map(SupportSample::collapsed).collect();
    let centroids: Vec<SupportSample> = blocks.iter().map(SupportSample::collapsed).collect();
    let point = run_arm(family, &collapsed, &centroids, &truth, &mask, scn.tau, &gamma, opt)?;
    Ok(Experiment { scenario: scn.boundary, tau: scn.tau, seed: opt.seed, blocks, mask, integral, point })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coarse(b: Boundary) -> Scenario {
        Scenario::with_grid(b, 200, 120)
    }

    #[test]
    fn fold2_is_compressed_fold1() {
        for i in 0..100 {
            let x = i as f64 * 0.03;
            assert_eq!(gamma2(x), gamma1(2.0 * x));
        }
    }

    #[test]
    fn distance_matches_brute_force() {
        let scn = coarse(Boundary::Fold2);
        let p = &scn.polyline;
        for &(x, y) in &[(0.1, 2.9), (3.0, -0.6), (6.2, 0.0), (1.7, 1.3), (4.4, 2.2)] {
            let brute = (0..POLYLINE_SEGMENTS).map(|k| p.seg_dist2(k, x, y)).fold(f64::INFINITY, f64::min).sqrt();
            assert_eq!(scn.distance(x, y), brute);
        }
    }

    #[test]
    fn jump_across_curve_is_delta() {
        let scn = coarse(Boundary::Fold1);
        for &x in &[0.7, 2.5, 4.1] {
            let g = scn.gamma(x);
            let above = scn.target(x, g + 1e-4);
            let below = scn.target(x, g - 1e-4);
            assert!((below - above - DELTA).abs() < 1e-3, "{below} {above}");
        }
    }

    #[test]
    fn threshold_with_equal_region_means() {
        let v = [(true, 1.0), (true, 3.0), (false, 2.0), (false, 2.0)];
        assert_eq!(decision_threshold(&v), 2.5);
    }

    #[test]
    fn layouts() {
        let scn = coarse(Boundary::Fold1);
        let pts = sample_layout(&scn, Layout::Points);
        assert_eq!(pts.len(), 22);
        assert_eq!(pts[11].centroid, vec![5.8, 1.6]);
        let lines = sample_layout(&scn, Layout::Lines);
        assert_eq!(lines[1].centroid, vec![3.0, -0.25]);
        assert_eq!(lines[1].extent, vec![0.0, 0.5]);
        assert_eq!(line_geometry(Boundary::Fold2).len(), 11);
        let blocks = BlockGrid::STANDARD.cells();
        assert_eq!(blocks.len(), 260);
        assert_eq!(blocks[0].centroid, vec![0.125, -0.575]);
        assert!("rings".parse::<Layout>().is_err());
    }

    #[test]
    fn boundary_of_linear_and_constant_fields() {
        let g = BlockGrid { x0: 0.0, y0: 0.0, size: 1.0, nx: 2, ny: 5 };
        let mean: Vec<f64> = (0..10).map(|k| 10.0 - 2.0 * (k % 5) as f64).collect();
        let b = extract_boundary(&mean, &g, 5.0);
        assert!((b[0].unwrap() - 2.5).abs() < 1e-12);
        assert_eq!(extract_boundary(&[9.0; 10], &g, 5.0), vec![None, None]);
        assert!(boundary_rmse(&[None, None], &[0.0, 0.0]).is_err());
        assert!((boundary_rmse(&[Some(1.3), Some(0.3)], &[1.0, 0.0]).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn simpson_integrates_kinks() {
        let v = adaptive_simpson(&|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-10);
        assert!((v - (0.045 + 0.245)).abs() < 1e-9);
    }
}
