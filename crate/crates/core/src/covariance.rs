//! Closed-form covariance between point, interval and box supports.
//!
//! A support is described per axis by its centroid `a` and extent `h`
//! (`h = 0` is a point along that axis). For a separable kernel the
//! covariance of two support averages factorises over axes, and each axis
//! factor is one of
//!
//! * box/box: `l^2 / (h1 h2) * R(a1, a2, h1, h2, l)`
//! * box/point: `l / h * rho(a, h, x, l)`
//! * point/point: `phi((a1 - a2) / l)`
//!
//! When the two supports do not overlap along an axis, the factor is
//! evaluated with the leading-term-free antiderivatives scaled by
//! `exp(c * offset)`, and the matching `exp(-c * offset)` is applied once
//! to the whole product.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{se_antiderivative_tail, se_second_antiderivative_tail, sgn, KernelFamily};

/// Extents below this fraction of the length scale are treated as points.
pub const POINT_EXTENT_REL: f64 = 1e-12;

/// Diagonal jitter added to every training covariance, relative to the amplitude.
pub const JITTER_REL: f64 = 1e-10;

/// Squared-exponential factors below this are flushed to zero.
const SE_UNDERFLOW: f64 = 1e-300;

/// One observation or inference support.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportSample {
    pub centroid: Vec<f64>,
    /// Per-axis extent, 0 for a point along that axis.
    pub extent: Vec<f64>,
    pub value: f64,
    /// Noise amplitude in value units, when known.
    pub noise: Option<f64>,
}

impl SupportSample {
    pub fn new(centroid: Vec<f64>, extent: Vec<f64>, value: f64) -> Self {
        debug_assert_eq!(centroid.len(), extent.len());
        SupportSample { centroid, extent, value, noise: None }
    }

    pub fn point(centroid: Vec<f64>, value: f64) -> Self {
        let extent = vec![0.0; centroid.len()];
        SupportSample::new(centroid, extent, value)
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = Some(noise);
        self
    }

    pub fn dim(&self) -> usize {
        self.centroid.len()
    }

    /// The same support collapsed to its centroid.
    pub fn collapsed(&self) -> Self {
        SupportSample {
            centroid: self.centroid.clone(),
            extent: vec![0.0; self.dim()],
            value: self.value,
            noise: self.noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.centroid.len() != self.extent.len() {
            return Err(Error::DimensionMismatch { expected: self.centroid.len(), got: self.extent.len() });
        }
        let finite = self.centroid.iter().chain(&self.extent).all(|v| v.is_finite()) && self.value.is_finite();
        if !finite {
            return Err(Error::InvalidInput("non-finite coordinate or value".into()));
        }
        if self.extent.iter().any(|&h| h < 0.0) {
            return Err(Error::InvalidInput("negative extent".into()));
        }
        if let Some(n) = self.noise {
            if !(n >= 0.0 && n.is_finite()) {
                return Err(Error::InvalidInput(format!("invalid noise {n}")));
            }
        }
        Ok(())
    }
}

/// Kernel family plus hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Signal variance `sigma_f^2`.
    pub amplitude: f64,
    pub length_scales: Vec<f64>,
    /// Homoscedastic noise amplitude `sigma_y`.
    pub base_noise: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, amplitude: f64, length_scales: Vec<f64>, base_noise: f64) -> Self {
        KernelSpec { family, amplitude, length_scales, base_noise }
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidInput(format!("amplitude must be positive, got {}", self.amplitude)));
        }
        if self.length_scales.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidInput("length scales must be positive".into()));
        }
        if !(self.base_noise >= 0.0 && self.base_noise.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid base noise {}", self.base_noise)));
        }
        Ok(())
    }
}

/// `R(a1, a2, h1, h2, l)`: the four-term second-antiderivative combination.
pub fn volume_overlap(family: KernelFamily, a1: f64, a2: f64, h1: f64, h2: f64, l: f64) -> f64 {
    let psi = |t: f64| family.second_antiderivative(t);
    let d = a1 - a2;
    let (t1, t2, t3, t4) = overlap_args(d, h1, h2, l);
    (psi(t2) + psi(t3)) - (psi(t1) + psi(t4))
}

/// `rho(a, h, x, l)`: integral of `phi` over the interval `[a - h/2, a + h/2]`
/// seen from `x`, in units of `l`.
pub fn interval_integral(family: KernelFamily, a: f64, h: f64, x: f64, l: f64) -> f64 {
    family.antiderivative((a + 0.5 * h - x) / l) - family.antiderivative((a - 0.5 * h - x) / l)
}

#[inline]
fn overlap_args(d: f64, h1: f64, h2: f64, l: f64) -> (f64, f64, f64, f64) {
    let dm = 0.5 * (h1 - h2);
    let sp = 0.5 * (h1 + h2);
    ((d + dm) / l, (d - sp) / l, (d + sp) / l, (d - dm) / l)
}

/// Per-axis factor as `value * exp(-log_scale)` with its log-derivative in `l`.
#[derive(Clone, Copy, Debug)]
struct AxisTerm {
    value: f64,
    log_scale: f64,
    dlog: f64,
}

impl AxisTerm {
    const ZERO: AxisTerm = AxisTerm { value: 0.0, log_scale: 0.0, dlog: 0.0 };
}

/// Whether the large-distance forms apply along one axis.
#[inline]
pub fn is_distant(a1: f64, a2: f64, h1: f64, h2: f64) -> bool {
    (a1 - a2).abs() >= 0.5 * (h1 + h2)
}

fn axis_term(family: KernelFamily, a1: f64, h1: f64, a2: f64, h2: f64, l: f64) -> AxisTerm {
    let h1 = if h1 < POINT_EXTENT_REL * l { 0.0 } else { h1 };
    let h2 = if h2 < POINT_EXTENT_REL * l { 0.0 } else { h2 };
    let distant = is_distant(a1, a2, h1, h2);
    match (h1 > 0.0, h2 > 0.0) {
        (true, true) => box_box(family, a1 - a2, h1, h2, l, distant),
        (true, false) => box_point(family, a1 - a2, h1, l, distant),
        (false, true) => box_point(family, a2 - a1, h2, l, distant),
        (false, false) => point_point(family, a1 - a2, l),
    }
}

fn box_box(family: KernelFamily, d: f64, h1: f64, h2: f64, l: f64, distant: bool) -> AxisTerm {
    let (t1, t2, t3, t4) = overlap_args(d, h1, h2, l);
    let (r, dr, log_scale) = if !distant {
        let psi = |t: f64| family.second_antiderivative(t);
        let lam = |t: f64| t / l * family.antiderivative(t);
        ((psi(t2) + psi(t3)) - (psi(t1) + psi(t4)), (lam(t1) + lam(t4)) - (lam(t2) + lam(t3)), 0.0)
    } else {
        let offset = (d.abs() - 0.5 * (h1 + h2)) / l;
        match family.decay_rate() {
            Some(c) => {
                let psi = |t: f64| family.second_antiderivative_scaled(t, offset).unwrap();
                let lam = |t: f64| t / l * family.antiderivative_scaled(t, offset).unwrap();
                (
                    (psi(t2) + psi(t3)) - (psi(t1) + psi(t4)),
                    (lam(t1) + lam(t4)) - (lam(t2) + lam(t3)),
                    c * offset,
                )
            }
            None => {
                let psi = se_second_antiderivative_tail;
                let lam = |t: f64| t / l * se_antiderivative_tail(t, sgn(t));
                let r = (psi(t2) + psi(t3)) - (psi(t1) + psi(t4));
                if r < SE_UNDERFLOW {
                    return AxisTerm::ZERO;
                }
                (r, (lam(t1) + lam(t4)) - (lam(t2) + lam(t3)), 0.0)
            }
        }
    };
    if !(r > 0.0) {
        return AxisTerm::ZERO;
    }
    AxisTerm { value: l * l / (h1 * h2) * r, log_scale, dlog: 2.0 / l + dr / r }
}

// `d` is the box centroid minus the point coordinate.
fn box_point(family: KernelFamily, d: f64, h: f64, l: f64, distant: bool) -> AxisTerm {
    let tp = (d + 0.5 * h) / l;
    let tm = (d - 0.5 * h) / l;
    let (rho, drho, log_scale) = if !distant {
        let big = |t: f64| family.antiderivative(t);
        let lam = |t: f64| t / l * family.phi(t);
        (big(tp) - big(tm), lam(tm) - lam(tp), 0.0)
    } else {
        let offset = (d.abs() - 0.5 * h) / l;
        // both endpoints lie on the side of sgn(d), one of them possibly at 0
        let side = d.signum();
        match family.decay_rate() {
            Some(c) => {
                let big = |t: f64| family.antiderivative_scaled_side(t, side, offset).unwrap();
                let lam = |t: f64| t / l * family.phi_scaled(t, offset).unwrap();
                (big(tp) - big(tm), lam(tm) - lam(tp), c * offset)
            }
            None => {
                let rho = se_antiderivative_tail(tp, side) - se_antiderivative_tail(tm, side);
                if rho < SE_UNDERFLOW {
                    return AxisTerm::ZERO;
                }
                let lam = |t: f64| t / l * family.phi(t);
                (rho, lam(tm) - lam(tp), 0.0)
            }
        }
    };
    if !(rho > 0.0) {
        return AxisTerm::ZERO;
    }
    AxisTerm { value: l / h * rho, log_scale, dlog: 1.0 / l + drho / rho }
}

fn point_point(family: KernelFamily, d: f64, l: f64) -> AxisTerm {
    let t = d / l;
    match family.decay_rate() {
        Some(c) => {
            let offset = t.abs();
            let p = family.phi_scaled(t, offset).unwrap();
            let dp = family.phi_prime_scaled(t, offset).unwrap();
            AxisTerm { value: p, log_scale: c * offset, dlog: -d / (l * l) * dp / p }
        }
        None => AxisTerm { value: 1.0, log_scale: 0.5 * t * t, dlog: t * t / l },
    }
}

fn check_dims(k: &KernelSpec, s1: &SupportSample, s2: &SupportSample) -> Result<()> {
    for got in [s1.dim(), s2.dim()] {
        if got != k.dim() {
            return Err(Error::DimensionMismatch { expected: k.dim(), got });
        }
    }
    Ok(())
}

// Assumes matching dimensions.
fn cov_inner(k: &KernelSpec, s1: &SupportSample, s2: &SupportSample, grad: Option<&mut [f64]>) -> f64 {
    let mut prod = k.amplitude;
    let mut log_scale = 0.0;
    let mut terms = [AxisTerm::ZERO; 8];
    let dim = k.dim();
    let mut heap;
    let terms: &mut [AxisTerm] = if dim <= terms.len() {
        &mut terms[..dim]
    } else {
        heap = vec![AxisTerm::ZERO; dim];
        &mut heap
    };
    for m in 0..dim {
        let t = axis_term(k.family, s1.centroid[m], s1.extent[m], s2.centroid[m], s2.extent[m], k.length_scales[m]);
        prod *= t.value;
        log_scale += t.log_scale;
        terms[m] = t;
    }
    let cov = if prod == 0.0 { 0.0 } else { prod * (-log_scale).exp() };
    if let Some(g) = grad {
        for (gq, t) in g.iter_mut().zip(terms.iter()) {
            *gq = if cov == 0.0 { 0.0 } else { cov * t.dlog };
        }
    }
    cov
}

/// Covariance of the noise-free support averages.
pub fn cov_uu(k: &KernelSpec, s1: &SupportSample, s2: &SupportSample) -> Result<f64> {
    check_dims(k, s1, s2)?;
    Ok(cov_inner(k, s1, s2, None))
}

/// Covariance of the observations: `cov_uu` plus `noise^2` on the diagonal.
pub fn cov_yy(k: &KernelSpec, s1: &SupportSample, s2: &SupportSample, same_index: bool) -> Result<f64> {
    let c = cov_uu(k, s1, s2)?;
    Ok(if same_index {
        let n = s1.noise.unwrap_or(0.0);
        c + n * n
    } else {
        c
    })
}

/// `d cov_uu / d l_q`.
pub fn dcov_dl(k: &KernelSpec, s1: &SupportSample, s2: &SupportSample, axis: usize) -> Result<f64> {
    check_dims(k, s1, s2)?;
    if axis >= k.dim() {
        return Err(Error::InvalidInput(format!("axis {axis} out of range for dimension {}", k.dim())));
    }
    let mut g = vec![0.0; k.dim()];
    cov_inner(k, s1, s2, Some(&mut g));
    Ok(g[axis])
}

/// Covariance together with all length-scale derivatives.
pub fn cov_with_grad(k: &KernelSpec, s1: &SupportSample, s2: &SupportSample) -> Result<(f64, Vec<f64>)> {
    check_dims(k, s1, s2)?;
    let mut g = vec![0.0; k.dim()];
    let c = cov_inner(k, s1, s2, Some(&mut g));
    Ok((c, g))
}

fn check_all(k: &KernelSpec, samples: &[SupportSample]) -> Result<()> {
    match samples.iter().find(|s| s.dim() != k.dim()) {
        Some(s) => Err(Error::DimensionMismatch { expected: k.dim(), got: s.dim() }),
        None => Ok(()),
    }
}

/// Cross covariance `K[i, j] = cov_uu(rows[i], cols[j])`.
pub fn cross_covariance(k: &KernelSpec, rows: &[SupportSample], cols: &[SupportSample]) -> Result<DMatrix<f64>> {
    check_all(k, rows)?;
    check_all(k, cols)?;
    let n = rows.len();
    let m = cols.len();
    // column-major storage: fill one column per task
    let data: Vec<f64> = cols
        .par_iter()
        .flat_map_iter(|c| rows.iter().map(move |r| cov_inner(k, r, c, None)))
        .collect();
    Ok(DMatrix::from_vec(n, m, data))
}

/// Symmetric covariance of one sample set, upper triangle mirrored.
pub fn self_covariance(k: &KernelSpec, samples: &[SupportSample]) -> Result<DMatrix<f64>> {
    check_all(k, samples)?;
    let n = samples.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| (0..=j).map(|i| cov_inner(k, &samples[i], &samples[j], None)).collect())
        .collect();
    let mut out = DMatrix::zeros(n, n);
    for (j, col) in cols.into_iter().enumerate() {
        for (i, v) in col.into_iter().enumerate() {
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Training covariance `K + diag(noise)^2 + jitter I`.
///
/// `noise` gives per-sample noise amplitudes; when absent the kernel's
/// `base_noise` is used for every sample.
pub fn training_covariance(k: &KernelSpec, samples: &[SupportSample], noise: Option<&[f64]>) -> Result<DMatrix<f64>> {
    let mut out = self_covariance(k, samples)?;
    add_noise_diagonal(&mut out, k, noise, JITTER_REL * k.amplitude)?;
    Ok(out)
}

pub(crate) fn add_noise_diagonal(m: &mut DMatrix<f64>, k: &KernelSpec, noise: Option<&[f64]>, jitter: f64) -> Result<()> {
    let n = m.nrows();
    if let Some(nv) = noise {
        if nv.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: nv.len() });
        }
    }
    for i in 0..n {
        let s = noise.map_or(k.base_noise, |nv| nv[i]);
        m[(i, i)] += s * s + jitter;
    }
    Ok(())
}

/// General assembly entry point mirroring the `K`, `K_*`, `K_**` uses.
///
/// With `add_noise_diag`, `rows` and `cols` must be the same set and the
/// noise diagonal plus jitter is added.
pub fn assemble_k(
    k: &KernelSpec,
    rows: &[SupportSample],
    cols: &[SupportSample],
    add_noise_diag: bool,
    noise: Option<&[f64]>,
) -> Result<DMatrix<f64>> {
    if add_noise_diag {
        if rows.len() != cols.len() || rows.iter().zip(cols).any(|(a, b)| a != b) {
            return Err(Error::InvalidInput("noise diagonal requires identical row and column sets".into()));
        }
        return training_covariance(k, rows, noise);
    }
    if std::ptr::eq(rows, cols) {
        return self_covariance(k, rows);
    }
    cross_covariance(k, rows, cols)
}

/// Derivatives of the noise-free training covariance with respect to each
/// length scale, one matrix per axis.
pub fn length_scale_gradients(k: &KernelSpec, samples: &[SupportSample]) -> Result<Vec<DMatrix<f64>>> {
    check_all(k, samples)?;
    let n = samples.len();
    let dim = k.dim();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut g = vec![0.0; dim];
            let mut col = Vec::with_capacity((j + 1) * dim);
            for i in 0..=j {
                cov_inner(k, &samples[i], &samples[j], Some(&mut g));
                col.extend_from_slice(&g);
            }
            col
        })
        .collect();
    let mut out = vec![DMatrix::zeros(n, n); dim];
    for (j, col) in cols.into_iter().enumerate() {
        for i in 0..=j {
            for (q, mat) in out.iter_mut().enumerate() {
                let v = col[i * dim + q];
                mat[(i, j)] = v;
                mat[(j, i)] = v;
            }
        }
    }
    Ok(out)
}
