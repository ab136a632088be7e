//! Fusion of a coarse block model with interval assays through a
//! heteroscedastic integral GP.
//!
//! Hyperparameters are learned from the assays alone. Their posterior
//! uncertainty at each block, together with the local assay density, sets
//! a per-block noise level for the block values, so that blocks well covered
//! by assays defer to them and poorly covered blocks keep their prior value.

use std::collections::HashMap;

use crate::covariance::{KernelSpec, SupportSample};
use crate::error::{Error, Result};
use crate::gp::{self, PosteriorField};
use crate::hyperopt::{self, OptimConfig};
use crate::kernels::KernelFamily;

/// Height of one bench.
pub const BENCH_HEIGHT: f64 = 10.0;
pub const DEFAULT_EPSILON: f64 = 0.01;

/// Regular 3-D array of volumetric cells. `origin` is the lower corner of
/// the grid; cell `(i, j, k)` is centred at `origin + (idx + 0.5) * cell_size`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockModel {
    pub origin: [f64; 3],
    pub cell_size: [f64; 3],
    pub counts: [usize; 3],
    pub cells: Vec<SupportSample>,
}

impl BlockModel {
    /// Full lattice with x varying fastest, then y, then z.
    pub fn from_values(origin: [f64; 3], cell_size: [f64; 3], counts: [usize; 3], values: &[f64]) -> Result<Self> {
        let n = counts[0] * counts[1] * counts[2];
        if values.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: values.len() });
        }
        let mut cells = Vec::with_capacity(n);
        for k in 0..counts[2] {
            for j in 0..counts[1] {
                for i in 0..counts[0] {
                    let idx = [i, j, k];
                    let c: Vec<f64> = (0..3).map(|m| origin[m] + (idx[m] as f64 + 0.5) * cell_size[m]).collect();
                    cells.push(SupportSample::new(c, cell_size.to_vec(), values[cells.len()]));
                }
            }
        }
        Ok(BlockModel { origin, cell_size, counts, cells })
    }

    /// Geometry only, every value set to 0.
    pub fn empty_grid(origin: [f64; 3], cell_size: [f64; 3], counts: [usize; 3]) -> Self {
        let n = counts[0] * counts[1] * counts[2];
        Self::from_values(origin, cell_size, counts, &vec![0.0; n]).unwrap()
    }

    /// Lattice index of the cell containing a centroid.
    pub fn lattice_index(&self, centroid: &[f64]) -> [i64; 3] {
        let mut out = [0; 3];
        for m in 0..3 {
            out[m] = ((centroid[m] - self.origin[m]) / self.cell_size[m] - 0.5).round() as i64;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.cell_size.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::InvalidInput("cell sizes must be positive".into()));
        }
        for c in &self.cells {
            if c.dim() != 3 {
                return Err(Error::DimensionMismatch { expected: 3, got: c.dim() });
            }
            if c.extent.iter().zip(&self.cell_size).any(|(h, s)| (h - s).abs() > 1e-9 * s) {
                return Err(Error::InvalidInput(format!("cell at {:?} does not match the grid cell size", c.centroid)));
            }
            let idx = self.lattice_index(&c.centroid);
            for m in 0..3 {
                let expect = self.origin[m] + (idx[m] as f64 + 0.5) * self.cell_size[m];
                if (c.centroid[m] - expect).abs() > 1e-6 * self.cell_size[m] {
                    return Err(Error::InvalidInput(format!("cell at {:?} is off the lattice", c.centroid)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionConfig {
    /// Elevation of the top of the drilled bench.
    pub bench_top: f64,
    pub epsilon: f64,
    /// Chebyshev radius, in cells, of the counting neighbourhood.
    pub neighborhood_radius: usize,
    /// Horizontal subdivision factor of the inference grid.
    pub subdivision: usize,
    /// When false the block values are ignored and only assays are used.
    pub use_epr: bool,
}

impl FusionConfig {
    pub fn new(bench_top: f64) -> Self {
        FusionConfig { bench_top, epsilon: DEFAULT_EPSILON, neighborhood_radius: 0, subdivision: 1, use_epr: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FusionMode {
    Fused,
    BhOnly,
}

impl FusionMode {
    pub fn tag(self) -> &'static str {
        match self {
            FusionMode::Fused => "fused",
            FusionMode::BhOnly => "bh_only",
        }
    }
}

#[derive(Clone, Debug)]
pub struct FusionReport {
    pub mode: FusionMode,
    pub kernel: KernelSpec,
    pub lml: f64,
    pub epr_blocks: Vec<SupportSample>,
    pub bh_samples: Vec<SupportSample>,
    pub bh_noise: Vec<f64>,
    /// Assay-only posterior at the blocks; its std is the blasthole uncertainty.
    pub bh_only: PosteriorField,
    pub bh_uncertainty: Vec<f64>,
    pub bh_count: Vec<usize>,
    pub bh_density: f64,
    pub epr_noise: Vec<f64>,
    pub fused: PosteriorField,
}

/// Block cells with centroid z in `[Z - 20, Z - 10]` and assays with
/// centroid z in `(Z - 10, Z]`.
pub fn select_benches(epr: &BlockModel, bh: &[SupportSample], z: f64) -> Result<(Vec<SupportSample>, Vec<SupportSample>)> {
    if !z.is_finite() {
        return Err(Error::InvalidInput("bench elevation must be finite".into()));
    }
    let (elo, ehi) = (z - 2.0 * BENCH_HEIGHT, z - BENCH_HEIGHT);
    let (blo, bhi) = (z - BENCH_HEIGHT, z);
    let epr_bench: Vec<_> = epr.cells.iter().filter(|c| c.centroid[2] >= elo && c.centroid[2] <= ehi).cloned().collect();
    let bh_bench: Vec<_> = bh.iter().filter(|s| s.centroid[2] > blo && s.centroid[2] <= bhi).cloned().collect();
    if bh_bench.is_empty() {
        return Err(Error::EmptyBench { source_name: "blasthole", lo: blo, hi: bhi });
    }
    if epr_bench.is_empty() {
        return Err(Error::EmptyBench { source_name: "block model", lo: elo, hi: ehi });
    }
    Ok((epr_bench, bh_bench))
}

// Footprint index along one axis with cells (lo, hi].
fn footprint_index(v: f64, origin: f64, cell: f64) -> i64 {
    ((v - origin) / cell).ceil() as i64 - 1
}

/// Assays whose (x, y) lies in each block's footprint, or in the union of
/// footprints within `radius` cells when `radius > 0`.
pub fn count_bh_per_block(grid: &BlockModel, blocks: &[SupportSample], bh: &[SupportSample], radius: usize) -> Vec<usize> {
    let mut per_column: HashMap<(i64, i64), usize> = HashMap::new();
    for s in bh {
        let i = footprint_index(s.centroid[0], grid.origin[0], grid.cell_size[0]);
        let j = footprint_index(s.centroid[1], grid.origin[1], grid.cell_size[1]);
        if i >= 0 && j >= 0 && (i as usize) < grid.counts[0] && (j as usize) < grid.counts[1] {
            *per_column.entry((i, j)).or_default() += 1;
        }
    }
    let r = radius as i64;
    blocks
        .iter()
        .map(|b| {
            let idx = grid.lattice_index(&b.centroid);
            let mut c = 0;
            for di in -r..=r {
                for dj in -r..=r {
                    c += per_column.get(&(idx[0] + di, idx[1] + dj)).copied().unwrap_or(0);
                }
            }
            c
        })
        .collect()
}

/// Mean count over blocks with at least one assay, 0 if there are none.
pub fn bh_density(counts: &[usize]) -> f64 {
    let m = counts.iter().filter(|&&c| c > 0).count();
    if m == 0 {
        0.0
    } else {
        counts.iter().sum::<usize>() as f64 / m as f64
    }
}

/// `rho * (max sigma - sigma_k)` where block `k` holds assays, `epsilon` elsewhere.
pub fn assign_epr_noise(sigma_hat: &[f64], counts: &[usize], rho: f64, epsilon: f64) -> Vec<f64> {
    let max = sigma_hat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    sigma_hat
        .iter()
        .zip(counts)
        .map(|(s, &c)| if c != 0 { rho * (max - s) } else { epsilon })
        .collect()
}

/// Split every block into `factor x factor` horizontal sub-blocks.
pub fn subdivide(blocks: &[SupportSample], factor: usize) -> Vec<SupportSample> {
    if factor <= 1 {
        return blocks.to_vec();
    }
    let f = factor as f64;
    let mut out = Vec::with_capacity(blocks.len() * factor * factor);
    for b in blocks {
        let hx = b.extent[0] / f;
        let hy = b.extent[1] / f;
        for j in 0..factor {
            for i in 0..factor {
                let x = b.centroid[0] - 0.5 * b.extent[0] + (i as f64 + 0.5) * hx;
                let y = b.centroid[1] - 0.5 * b.extent[1] + (j as f64 + 0.5) * hy;
                let mut c = b.centroid.clone();
                c[0] = x;
                c[1] = y;
                let mut h = b.extent.clone();
                h[0] = hx;
                h[1] = hy;
                out.push(SupportSample::new(c, h, b.value));
            }
        }
    }
    out
}

/// Posterior from assays and blocks with stacked noise `[n_B; n_E]`.
pub fn heteroscedastic_predict(
    kernel: &KernelSpec,
    bh: &[SupportSample],
    bh_noise: &[f64],
    epr: &[SupportSample],
    epr_noise: &[f64],
    query: &[SupportSample],
) -> Result<PosteriorField> {
    let mut training = bh.to_vec();
    training.extend_from_slice(epr);
    let mut noise = bh_noise.to_vec();
    noise.extend_from_slice(epr_noise);
    let model = gp::fit(kernel, &training, Some(&noise))?;
    model.predict(query, false)
}

/// Run the full fusion pipeline.
pub fn fuse(
    epr: &BlockModel,
    bh: &[SupportSample],
    cfg: &FusionConfig,
    opt: &OptimConfig,
    family: KernelFamily,
) -> Result<FusionReport> {
    if !(cfg.epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {}", cfg.epsilon)));
    }
    epr.validate()?;
    // step 1
    let (epr_bench, bh_bench) = select_benches(epr, bh, cfg.bench_top)?;

    // step 3: learn from assays; known assay noise is held fixed
    let known: Option<Vec<f64>> = bh_bench.iter().map(|s| s.noise).collect();
    let learned = hyperopt::optimize_detailed(family, &bh_bench, known.as_deref(), opt)?;
    let mut kernel = learned.kernel.clone();
    let bh_noise: Vec<f64> = bh_bench.iter().map(|s| s.noise.unwrap_or(kernel.base_noise)).collect();
    if known.is_some() {
        kernel.base_noise = 0.0;
    }

    // step 4
    let bh_model = gp::fit(&kernel, &bh_bench, Some(&bh_noise))?;
    let bh_only = bh_model.predict(&epr_bench, false)?;
    let sigma_hat = bh_only.std.clone();

    // step 5
    let counts = count_bh_per_block(epr, &epr_bench, &bh_bench, cfg.neighborhood_radius);
    let rho = bh_density(&counts);
    let epr_noise = assign_epr_noise(&sigma_hat, &counts, rho, cfg.epsilon);

    // step 6
    let query = subdivide(&epr_bench, cfg.subdivision);
    let (mode, fused) = if cfg.use_epr {
        let f = heteroscedastic_predict(&kernel, &bh_bench, &bh_noise, &epr_bench, &epr_noise, &query)?;
        (FusionMode::Fused, f)
    } else {
        (FusionMode::BhOnly, bh_model.predict(&query, false)?)
    };
    Ok(FusionReport {
        mode,
        kernel,
        lml: learned.lml,
        epr_blocks: epr_bench,
        bh_samples: bh_bench,
        bh_noise,
        bh_only,
        bh_uncertainty: sigma_hat,
        bh_count: counts,
        bh_density: rho,
        epr_noise,
        fused,
    })
}
