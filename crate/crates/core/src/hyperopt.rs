//! Multi-start, bound-constrained maximisation of the log marginal likelihood.
//!
//! Parameters are optimised in log space with a projected limited-memory
//! BFGS iteration and a backtracking Armijo search along the projected path.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::covariance::{KernelSpec, SupportSample};
use crate::error::{Error, Result};
use crate::gp;
use crate::kernels::KernelFamily;

pub const DEFAULT_LENGTH_SCALE_BOUNDS: (f64, f64) = (1e-6, 1e3);
pub const DEFAULT_LOWER: f64 = 1e-6;

/// Per-parameter box constraints in natural units. `None` entries fall back
/// to data-driven defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    /// Signal standard deviation `sigma_f`, so that `sigma_f^2` is bounded by the squares.
    pub amplitude: Option<(f64, f64)>,
    pub length_scale: (f64, f64),
    /// Base noise amplitude `sigma_y`.
    pub noise: Option<(f64, f64)>,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { amplitude: None, length_scale: DEFAULT_LENGTH_SCALE_BOUNDS, noise: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub n_starts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub bounds: Bounds,
    /// Box the start points are drawn from, clipped to `bounds`; `None` draws
    /// within the bounds themselves.
    pub init: Option<Bounds>,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig { n_starts: 10, max_iters: 500, tol: 1e-7, bounds: Bounds::default(), init: None, seed: 0 }
    }
}

impl OptimConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_starts(mut self, n: usize) -> Self {
        self.n_starts = n;
        self
    }

    pub fn with_init(mut self, init: Bounds) -> Self {
        self.init = Some(init);
        self
    }
}

#[derive(Clone, Debug)]
pub struct StartReport {
    pub initial_lml: f64,
    pub final_lml: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Natural-unit parameters `[sigma_f^2, l.., sigma_y]` at the end of the run.
    pub params: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct OptimResult {
    pub kernel: KernelSpec,
    pub lml: f64,
    pub best_start: usize,
    pub starts: Vec<Option<StartReport>>,
}

/// Box in log space over `[ln sigma_f^2, ln l_1, .., ln l_D, ln sigma_y]`.
#[derive(Clone, Debug)]
pub struct LogBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
}

/// Resolve the bounds for a data set. Amplitude and noise default to
/// `[1e-6, 2 std(y)]`; a degenerate upper bound is widened to `1e3` times the lower.
pub fn resolve_bounds(bounds: &Bounds, training: &[SupportSample], dim: usize, fixed_noise: bool) -> Result<LogBox> {
    let values: Vec<f64> = training.iter().map(|s| s.value).collect();
    let two_std = 2.0 * std_dev(&values);
    let fallback = |lo: f64| if two_std > lo * 1e3 { two_std } else { lo * 1e3 };
    let amp = bounds.amplitude.unwrap_or((DEFAULT_LOWER, fallback(DEFAULT_LOWER)));
    let noise = bounds.noise.unwrap_or((DEFAULT_LOWER, fallback(DEFAULT_LOWER)));
    let ls = bounds.length_scale;
    for (name, (lo, hi)) in [("amplitude", amp), ("length scale", ls), ("noise", noise)] {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::InvalidInput(format!("{name} bounds must satisfy 0 < lo < hi, got [{lo}, {hi}]")));
        }
    }
    let mut lo = vec![2.0 * amp.0.ln()];
    let mut hi = vec![2.0 * amp.1.ln()];
    lo.extend(std::iter::repeat_n(ls.0.ln(), dim));
    hi.extend(std::iter::repeat_n(ls.1.ln(), dim));
    if !fixed_noise {
        lo.push(noise.0.ln());
        hi.push(noise.1.ln());
    }
    Ok(LogBox { lo, hi })
}

/// Start-point box scaled to the data: `sigma_f` in `[0.1, 1] * 2 std(y)`,
/// `sigma_y` in `[1e-3, 0.1] * 2 std(y)` and length scales in `[1, 100]`.
pub fn search_range(training: &[SupportSample]) -> Bounds {
    let values: Vec<f64> = training.iter().map(|s| s.value).collect();
    let two_std = 2.0 * std_dev(&values);
    let s = if two_std > 0.0 { two_std } else { 1.0 };
    Bounds { amplitude: Some((0.1 * s, s)), length_scale: (1.0, 100.0), noise: Some((1e-3 * s, 0.1 * s)) }
}

fn to_kernel(family: KernelFamily, x: &[f64], dim: usize) -> KernelSpec {
    let noise = if x.len() > dim + 1 { x[dim + 1].exp() } else { 0.0 };
    KernelSpec::new(family, x[0].exp(), x[1..=dim].iter().map(|v| v.exp()).collect(), noise)
}

struct Objective<'a> {
    family: KernelFamily,
    training: &'a [SupportSample],
    noise_vec: Option<&'a [f64]>,
    dim: usize,
}

impl Objective<'_> {
    /// Negative LML and its log-space gradient, `None` when the covariance
    /// cannot be factored or the value is not finite.
    fn eval(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let k = to_kernel(self.family, x, self.dim);
        let (v, g) = gp::lml_and_grad(&k, self.training, self.noise_vec).ok()?;
        if !v.is_finite() || g.iter().any(|d| !d.is_finite()) {
            return None;
        }
        // chain rule: d/d ln(theta) = theta * d/d theta
        let mut theta = vec![k.amplitude];
        theta.extend(&k.length_scales);
        theta.push(k.base_noise);
        let gx = x.iter().enumerate().map(|(i, _)| -g[i] * theta[i]).collect();
        Some((-v, gx))
    }
}

fn project(x: &mut [f64], b: &LogBox) {
    for ((v, lo), hi) in x.iter_mut().zip(&b.lo).zip(&b.hi) {
        *v = v.clamp(*lo, *hi);
    }
}

fn projected_gradient(x: &[f64], g: &[f64], b: &LogBox) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            if (x[i] <= b.lo[i] && g[i] > 0.0) || (x[i] >= b.hi[i] && g[i] < 0.0) {
                0.0
            } else {
                g[i]
            }
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

const MEMORY: usize = 10;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 40;

struct LocalResult {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

/// Two-loop recursion on the free variables.
fn lbfgs_direction(g: &[f64], free: &[bool], mem: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.iter().zip(free).map(|(v, &f)| if f { *v } else { 0.0 }).collect();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y, rho) in mem.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = mem.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().zip(free).map(|(v, &f)| if f { -v } else { 0.0 }).collect()
}

fn minimize(obj: &Objective, x0: Vec<f64>, b: &LogBox, cfg: &OptimConfig) -> Option<LocalResult> {
    let mut x = x0;
    project(&mut x, b);
    let (mut f, mut g) = obj.eval(&x)?;
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        let pg = projected_gradient(&x, &g, b);
        if inf_norm(&pg) <= cfg.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let free: Vec<bool> = pg.iter().zip(&g).map(|(p, gi)| *p != 0.0 || *gi == 0.0).collect();
        let mut accepted = None;
        for use_memory in [true, false] {
            if !use_memory && mem.is_empty() {
                break;
            }
            let mut d = if use_memory { lbfgs_direction(&g, &free, &mem) } else { pg.iter().map(|v| -v).collect() };
            if dot(&d, &g) >= 0.0 {
                d = pg.iter().map(|v| -v).collect();
            }
            let mut step = if mem.is_empty() { (1.0 / inf_norm(&d)).min(1.0) } else { 1.0 };
            for _ in 0..MAX_BACKTRACK {
                let mut xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
                project(&mut xn, b);
                let dx: Vec<f64> = xn.iter().zip(&x).map(|(a, c)| a - c).collect();
                let decrease = dot(&g, &dx);
                if decrease >= 0.0 {
                    break;
                }
                if let Some((fn_, gn)) = obj.eval(&xn) {
                    if fn_ <= f + ARMIJO * decrease {
                        accepted = Some((xn, fn_, gn, dx));
                        break;
                    }
                }
                step *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            mem.clear();
        }
        let Some((xn, fn_, gn, s)) = accepted else {
            // no descent possible along the projected path
            converged = inf_norm(&pg) <= cfg.tol.sqrt();
            break;
        };
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, c)| a - c).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if mem.len() == MEMORY {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        let stalled = (f - fn_).abs() <= 1e-15 * f.abs().max(1.0);
        x = xn;
        f = fn_;
        g = gn;
        if stalled {
            if inf_norm(&projected_gradient(&x, &g, b)) <= cfg.tol {
                converged = true;
                break;
            }
            if mem.is_empty() {
                break;
            }
            // restart from steepest descent
            mem.clear();
            continue;
        }
    }
    Some(LocalResult { x, f, iterations, converged })
}

/// Draw start points uniformly in log space within the box.
pub fn start_points(b: &LogBox, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| b.lo.iter().zip(&b.hi).map(|(lo, hi)| rng.gen_range(*lo..*hi)).collect()).collect()
}

/// Maximise the LML over amplitude, length scales and, unless `noise_vec`
/// is given, the base noise.
pub fn optimize_detailed(
    family: KernelFamily,
    training: &[SupportSample],
    noise_vec: Option<&[f64]>,
    cfg: &OptimConfig,
) -> Result<OptimResult> {
    if training.len() < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 training samples, got {}", training.len())));
    }
    if cfg.n_starts == 0 {
        return Err(Error::InvalidInput("n_starts must be at least 1".into()));
    }
    let dim = training[0].dim();
    if let Some(s) = training.iter().find(|s| s.dim() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: s.dim() });
    }
    let b = resolve_bounds(&cfg.bounds, training, dim, noise_vec.is_some())?;
    // keep iterates strictly inside the box
    let margin = |lo: f64, hi: f64| 1e-9 * (hi - lo);
    let inner = LogBox {
        lo: b.lo.iter().zip(&b.hi).map(|(l, h)| l + margin(*l, *h)).collect(),
        hi: b.lo.iter().zip(&b.hi).map(|(l, h)| h - margin(*l, *h)).collect(),
    };
    let obj = Objective { family, training, noise_vec, dim };
    let draw = match &cfg.init {
        None => inner.clone(),
        Some(init) => {
            let ib = resolve_bounds(init, training, dim, noise_vec.is_some())?;
            let lo: Vec<f64> = ib.lo.iter().zip(&inner.lo).map(|(a, b)| a.max(*b)).collect();
            let hi: Vec<f64> = ib.hi.iter().zip(&inner.hi).map(|(a, b)| a.min(*b)).collect();
            if lo.iter().zip(&hi).any(|(l, h)| l >= h) {
                return Err(Error::InvalidInput("initialisation box does not intersect the bounds".into()));
            }
            LogBox { lo, hi }
        }
    };
    let starts = start_points(&draw, cfg.n_starts, cfg.seed);
    let runs: Vec<Option<StartReport>> = starts
        .into_par_iter()
        .map(|x0| {
            let (f0, _) = obj.eval(&x0)?;
            let r = minimize(&obj, x0, &inner, cfg)?;
            let k = to_kernel(family, &r.x, dim);
            let mut params = vec![k.amplitude];
            params.extend(&k.length_scales);
            params.push(k.base_noise);
            Some(StartReport { initial_lml: -f0, final_lml: -r.f, iterations: r.iterations, converged: r.converged, params })
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in runs.iter().enumerate() {
        if let Some(r) = r {
            if best.is_none_or(|(_, v)| r.final_lml > v) {
                best = Some((i, r.final_lml));
            }
        }
    }
    let Some((idx, value)) = best else {
        return Err(Error::AllStartsFailed { starts: cfg.n_starts });
    };
    let p = &runs[idx].as_ref().unwrap().params;
    let kernel = KernelSpec::new(family, p[0], p[1..=dim].to_vec(), if noise_vec.is_some() { 0.0 } else { p[dim + 1] });
    Ok(OptimResult { kernel, lml: value, best_start: idx, starts: runs })
}

/// Best kernel over all starts.
pub fn optimize(family: KernelFamily, training: &[SupportSample], cfg: &OptimConfig) -> Result<KernelSpec> {
    Ok(optimize_detailed(family, training, None, cfg)?.kernel)
}
