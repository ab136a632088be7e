//! Training, posterior inference and the log marginal likelihood.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::covariance::{self, KernelSpec, SupportSample, JITTER_REL};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Jitter retries after the first attempt, each ten times larger.
pub const JITTER_RETRIES: usize = 3;

/// Frozen trained state.
#[derive(Clone, Debug)]
pub struct GpModel {
    pub kernel: KernelSpec,
    pub training: Vec<SupportSample>,
    /// Per-sample noise amplitude used on the diagonal.
    pub noise_vec: Vec<f64>,
    /// Lower Cholesky factor of `K_y`.
    pub chol: DMatrix<f64>,
    /// `K_y^-1 (y - prior_mean)`.
    pub alpha: DVector<f64>,
    pub prior_mean: f64,
    /// Diagonal jitter that made the factorisation succeed.
    pub jitter: f64,
}

/// Posterior mean and standard deviation at a list of supports.
#[derive(Clone, Debug)]
pub struct PosteriorField {
    pub locations: Vec<SupportSample>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub cov: Option<DMatrix<f64>>,
}

impl PosteriorField {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Resolve the per-sample noise: an explicit vector wins, otherwise the
/// kernel's base noise applies to every sample.
pub fn resolve_noise(kernel: &KernelSpec, n: usize, noise_vec: Option<&[f64]>) -> Result<Vec<f64>> {
    match noise_vec {
        Some(v) if v.len() != n => Err(Error::DimensionMismatch { expected: n, got: v.len() }),
        Some(v) => {
            if v.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
                return Err(Error::InvalidInput("noise entries must be finite and non-negative".into()));
            }
            Ok(v.to_vec())
        }
        None => Ok(vec![kernel.base_noise; n]),
    }
}

/// Up-looking Cholesky. Returns the lower factor, or the index and value of
/// the first non-positive pivot.
pub fn cholesky(a: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, (usize, f64)> {
    let n = a.nrows();
    // upper factor U with K = U^T U; column j of U is row j of L
    let mut u = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            let (ci, cj) = (u.column(i), u.column(j));
            let dot: f64 = ci.rows(0, i).dot(&cj.rows(0, i));
            let v = (a[(i, j)] - dot) / u[(i, i)];
            u[(i, j)] = v;
        }
        let cj = u.column(j);
        let sq = cj.rows(0, j).norm_squared();
        let pivot = a[(j, j)] - sq;
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err((j, pivot));
        }
        u[(j, j)] = pivot.sqrt();
    }
    Ok(u.transpose())
}

/// Factor `base + jitter I`, escalating the jitter tenfold up to
/// [`JITTER_RETRIES`] times.
pub fn factor_with_jitter(base: &DMatrix<f64>, amplitude: f64) -> Result<(DMatrix<f64>, f64)> {
    let mut jitter = JITTER_REL * amplitude;
    let mut last = (0, f64::NAN);
    for attempt in 0..=JITTER_RETRIES {
        let mut a = base.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += jitter;
        }
        match cholesky(&a) {
            Ok(l) => {
                if attempt > 0 {
                    log::debug!("cholesky succeeded with jitter {jitter:e}");
                }
                return Ok((l, jitter));
            }
            Err(e) => last = e,
        }
        if attempt < JITTER_RETRIES {
            jitter *= 10.0;
        }
    }
    Err(Error::IllConditioned { index: last.0, pivot: last.1, jitter })
}

fn check_training(kernel: &KernelSpec, training: &[SupportSample]) -> Result<()> {
    if training.is_empty() {
        return Err(Error::NoTrainingData);
    }
    kernel.validate()?;
    for s in training {
        if s.dim() != kernel.dim() {
            return Err(Error::DimensionMismatch { expected: kernel.dim(), got: s.dim() });
        }
    }
    Ok(())
}

/// Mean of the training values, used as the constant prior mean.
pub fn prior_mean(training: &[SupportSample]) -> f64 {
    training.iter().map(|s| s.value).sum::<f64>() / training.len() as f64
}

struct Factored {
    signal: DMatrix<f64>,
    noise: Vec<f64>,
    chol: DMatrix<f64>,
    jitter: f64,
    alpha: DVector<f64>,
    centered: DVector<f64>,
    mu0: f64,
}

fn factor(kernel: &KernelSpec, training: &[SupportSample], noise_vec: Option<&[f64]>) -> Result<Factored> {
    check_training(kernel, training)?;
    let noise = resolve_noise(kernel, training.len(), noise_vec)?;
    let signal = covariance::self_covariance(kernel, training)?;
    let mut ky = signal.clone();
    for (i, s) in noise.iter().enumerate() {
        ky[(i, i)] += s * s;
    }
    let (chol, jitter) = factor_with_jitter(&ky, kernel.amplitude)?;
    let mu0 = prior_mean(training);
    let centered = DVector::from_iterator(training.len(), training.iter().map(|s| s.value - mu0));
    let alpha = solve_chol(&chol, &centered);
    Ok(Factored { signal, noise, chol, jitter, alpha, centered, mu0 })
}

fn solve_chol(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let z = l.solve_lower_triangular(b).expect("non-singular factor");
    l.tr_solve_lower_triangular(&z).expect("non-singular factor")
}

/// Factor the training covariance and solve for the weight vector.
pub fn fit(kernel: &KernelSpec, training: &[SupportSample], noise_vec: Option<&[f64]>) -> Result<GpModel> {
    let f = factor(kernel, training, noise_vec)?;
    Ok(GpModel {
        kernel: kernel.clone(),
        training: training.to_vec(),
        noise_vec: f.noise,
        chol: f.chol,
        alpha: f.alpha,
        prior_mean: f.mu0,
        jitter: f.jitter,
    })
}

impl GpModel {
    /// Posterior at `query`; the full covariance is formed only on request.
    pub fn predict(&self, query: &[SupportSample], want_cov: bool) -> Result<PosteriorField> {
        predict(self, query, want_cov)
    }

    /// `K_y` rebuilt from the stored factor.
    pub fn reconstructed(&self) -> DMatrix<f64> {
        &self.chol * self.chol.transpose()
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.training.len() as f64;
        let y = DVector::from_iterator(self.training.len(), self.training.iter().map(|s| s.value - self.prior_mean));
        let logdet: f64 = self.chol.diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * y.dot(&self.alpha) - logdet - 0.5 * n * LN_2PI
    }
}

pub fn predict(model: &GpModel, query: &[SupportSample], want_cov: bool) -> Result<PosteriorField> {
    let k = &model.kernel;
    if let Some(s) = query.iter().find(|s| s.dim() != k.dim()) {
        return Err(Error::DimensionMismatch { expected: k.dim(), got: s.dim() });
    }
    let kstar = covariance::cross_covariance(k, &model.training, query)?;
    let mean: Vec<f64> = (kstar.transpose() * &model.alpha).iter().map(|m| m + model.prior_mean).collect();
    let v = model.chol.solve_lower_triangular(&kstar).expect("non-singular factor");
    let prior: Vec<f64> = query.par_iter().map(|q| covariance::cov_uu(k, q, q).unwrap()).collect();
    let mut std = Vec::with_capacity(query.len());
    let mut worst = 0.0f64;
    for (j, p) in prior.iter().enumerate() {
        let var = p - v.column(j).norm_squared();
        worst = worst.min(var);
        std.push(var.max(0.0).sqrt());
    }
    if worst < -1e-6 * k.amplitude {
        log::warn!("posterior variance {worst:e} is negative beyond tolerance; covariance may be ill-conditioned");
    }
    let cov = if want_cov {
        let kss = covariance::self_covariance(k, query)?;
        let mut c = kss - v.transpose() * &v;
        for j in 0..c.nrows() {
            c[(j, j)] = c[(j, j)].max(0.0);
        }
        Some(c)
    } else {
        None
    };
    Ok(PosteriorField { locations: query.to_vec(), mean, std, cov })
}

/// Log marginal likelihood with the targets centred by their mean.
pub fn lml(kernel: &KernelSpec, training: &[SupportSample], noise_vec: Option<&[f64]>) -> Result<f64> {
    let f = factor(kernel, training, noise_vec)?;
    Ok(lml_from(&f))
}

fn lml_from(f: &Factored) -> f64 {
    let n = f.centered.len() as f64;
    let logdet: f64 = f.chol.diagonal().iter().map(|d| d.ln()).sum();
    -0.5 * f.centered.dot(&f.alpha) - logdet - 0.5 * n * LN_2PI
}

/// Number of hyperparameters: amplitude, one length scale per axis, base noise.
pub fn n_params(kernel: &KernelSpec) -> usize {
    kernel.dim() + 2
}

/// Log marginal likelihood and its gradient with respect to
/// `[sigma_f^2, l_1, .., l_D, sigma_y]`.
///
/// With an explicit `noise_vec` the base noise does not enter `K_y` and its
/// gradient entry is 0.
pub fn lml_and_grad(
    kernel: &KernelSpec,
    training: &[SupportSample],
    noise_vec: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    let f = factor(kernel, training, noise_vec)?;
    let value = lml_from(&f);
    let n = training.len();
    let kinv = {
        let linv = f.chol.solve_lower_triangular(&DMatrix::identity(n, n)).expect("non-singular factor");
        linv.transpose() * linv
    };
    let m = &f.alpha * f.alpha.transpose() - kinv;
    let half_trace = |d: &DMatrix<f64>| 0.5 * m.component_mul(d).sum();

    let mut grad = Vec::with_capacity(n_params(kernel));
    // jitter scales with the amplitude, so it belongs to dK/dsigma_f^2
    let mut dk_amp = f.signal.clone() / kernel.amplitude;
    for i in 0..n {
        dk_amp[(i, i)] += f.jitter / kernel.amplitude;
    }
    grad.push(half_trace(&dk_amp));
    for dk in covariance::length_scale_gradients(kernel, training)? {
        grad.push(half_trace(&dk));
    }
    grad.push(if noise_vec.is_some() { 0.0 } else { 2.0 * kernel.base_noise * m.trace() * 0.5 });
    Ok((value, grad))
}

/// One entry of the gradient returned by [`lml_and_grad`].
pub fn lml_grad(kernel: &KernelSpec, training: &[SupportSample], noise_vec: Option<&[f64]>, wrt: usize) -> Result<f64> {
    if wrt >= n_params(kernel) {
        return Err(Error::InvalidInput(format!("hyperparameter index {wrt} out of range")));
    }
    Ok(lml_and_grad(kernel, training, noise_vec)?.1[wrt])
}
