#![allow(dead_code)]

use igp::{KernelFamily, KernelSpec, SupportSample};
use rand::Rng;

pub const FAMILIES: [KernelFamily; 4] =
    [KernelFamily::SquaredExponential, KernelFamily::Exponential, KernelFamily::Matern32, KernelFamily::Matern52];

/// Composite midpoint rule on `[a, b]` with one Richardson step, doubled
/// until two successive estimates agree.
pub fn midpoint(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let rule = |n: usize| {
        let h = (b - a) / n as f64;
        (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
    };
    let mut n = 16;
    let mut coarse = rule(n);
    let mut prev = f64::NAN;
    loop {
        let fine = rule(2 * n);
        let est = (4.0 * fine - coarse) / 3.0;
        if (est - prev).abs() <= 1e-12 * est.abs().max(1e-300) || n >= 1 << 16 {
            return est;
        }
        prev = est;
        coarse = fine;
        n *= 2;
    }
}

/// Midpoint integral split at the given interior breakpoints.
pub fn midpoint_pieces(f: &dyn Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64]) -> f64 {
    let mut pts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|t| *t > a && *t < b).collect();
    inner.sort_by(f64::total_cmp);
    pts.extend(inner);
    pts.push(b);
    pts.windows(2).map(|w| midpoint(f, w[0], w[1])).sum()
}

/// Average of `phi((u - v) / l)` over `u` in the first support and `v` in
/// the second along one axis. Two finite intervals are reduced to one
/// integral over the lag `s = u - v` weighted by the overlap length.
pub fn axis_average(family: KernelFamily, a1: f64, h1: f64, a2: f64, h2: f64, l: f64) -> f64 {
    let phi = |s: f64| family.phi(s / l);
    match (h1 > 0.0, h2 > 0.0) {
        (false, false) => phi(a1 - a2),
        (true, false) => midpoint_pieces(&|u| phi(u - a2), a1 - 0.5 * h1, a1 + 0.5 * h1, &[a2]) / h1,
        (false, true) => midpoint_pieces(&|v| phi(a1 - v), a2 - 0.5 * h2, a2 + 0.5 * h2, &[a1]) / h2,
        (true, true) => {
            let (lo1, hi1, lo2, hi2) = (a1 - 0.5 * h1, a1 + 0.5 * h1, a2 - 0.5 * h2, a2 + 0.5 * h2);
            let w = |s: f64| (hi1.min(hi2 + s) - lo1.max(lo2 + s)).max(0.0);
            let (smin, smax) = (lo1 - hi2, hi1 - lo2);
            let breaks = [0.0, lo1 - lo2, hi1 - hi2];
            midpoint_pieces(&|s| phi(s) * w(s), smin, smax, &breaks) / (h1 * h2)
        }
    }
}

pub fn cov_oracle(k: &KernelSpec, s1: &SupportSample, s2: &SupportSample) -> f64 {
    let mut c = k.amplitude;
    for m in 0..k.dim() {
        c *= axis_average(k.family, s1.centroid[m], s1.extent[m], s2.centroid[m], s2.extent[m], k.length_scales[m]);
    }
    c
}

/// Random support of the requested kind: 0 = point, 1 = line along a random
/// axis, 2 = volume.
pub fn random_support<R: Rng>(rng: &mut R, dim: usize, kind: usize, spread: f64) -> SupportSample {
    let centroid: Vec<f64> = (0..dim).map(|_| rng.gen_range(-spread..spread)).collect();
    let mut extent = vec![0.0; dim];
    match kind {
        0 => {}
        1 => {
            let ax = rng.gen_range(0..dim);
            extent[ax] = rng.gen_range(0.1..2.0);
        }
        _ => {
            for e in extent.iter_mut() {
                *e = rng.gen_range(0.1..2.0);
            }
        }
    }
    SupportSample::new(centroid, extent, 0.0)
}

pub fn random_kernel<R: Rng>(rng: &mut R, family: KernelFamily, dim: usize) -> KernelSpec {
    let ls = (0..dim).map(|_| rng.gen_range(0.5..2.5)).collect();
    KernelSpec::new(family, rng.gen_range(0.5..3.0), ls, 0.1)
}

/// Relative difference with an absolute floor.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// Central difference of `f` at `x` with step `h`.
pub fn central(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Fourth-order central difference.
pub fn central4(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

/// Jump of `f` across `x0` beyond what its one-sided slope predicts over
/// `x0 - eps .. x0 + eps`, relative to `|f(x0 - eps)|`.
pub fn jump_across(f: &dyn Fn(f64) -> f64, x0: f64, eps: f64) -> f64 {
    let delta = 1e-5;
    let below = f(x0 - eps);
    let slope = (below - f(x0 - eps - delta)) / delta;
    let above = f(x0 + eps);
    (above - below - slope * 2.0 * eps).abs() / below.abs().max(1e-300)
}
