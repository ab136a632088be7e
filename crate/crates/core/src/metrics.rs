//! Grade validation metrics: ratio distortion, material classes, confusion
//! tables and the probability of high-grade material.

use std::f64::consts::{LN_2, SQRT_2};
use std::fmt;

use crate::covariance::SupportSample;
use crate::error::{Error, Result};

/// Ordinal material class with fixed numeric codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CategoryLabel {
    Waste = 1,
    LowGrade = 2,
    HighGrade = 3,
}

impl CategoryLabel {
    pub const ALL: [CategoryLabel; 3] = [CategoryLabel::Waste, CategoryLabel::LowGrade, CategoryLabel::HighGrade];

    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn short(self) -> &'static str {
        match self {
            CategoryLabel::Waste => "W",
            CategoryLabel::LowGrade => "LG",
            CategoryLabel::HighGrade => "HG",
        }
    }

    fn index(self) -> usize {
        self as usize - 1
    }
}

impl fmt::Display for CategoryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

/// Class thresholds `(t1, t2)`: waste below `t1`, high grade from `t2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub low: f64,
    pub high: f64,
}

impl Thresholds {
    pub const DEFAULT: Thresholds = Thresholds { low: 55.0, high: 60.0 };

    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low < high) {
            return Err(Error::InvalidInput(format!("thresholds must satisfy t1 < t2, got ({low}, {high})")));
        }
        Ok(Thresholds { low, high })
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds::DEFAULT
    }
}

impl std::str::FromStr for Thresholds {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || Error::InvalidInput(format!("expected 't1,t2', got '{s}'"));
        if parts.len() != 2 {
            return Err(bad());
        }
        let a = parts[0].parse().map_err(|_| bad())?;
        let b = parts[1].parse().map_err(|_| bad())?;
        Thresholds::new(a, b)
    }
}

pub fn classify(mean: f64, t: Thresholds) -> CategoryLabel {
    if mean < t.low {
        CategoryLabel::Waste
    } else if mean < t.high {
        CategoryLabel::LowGrade
    } else {
        CategoryLabel::HighGrade
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatioDistortion {
    pub sigma_r: f64,
    pub used: usize,
    /// Pairs dropped because either value was not strictly positive.
    pub rejected: usize,
}

/// `std(log2(model / reference)) * ln 2` over strictly positive pairs.
pub fn sigma_r(model: &[f64], reference: &[f64]) -> Result<RatioDistortion> {
    if model.len() != reference.len() {
        return Err(Error::DimensionMismatch { expected: reference.len(), got: model.len() });
    }
    let logs: Vec<f64> = model
        .iter()
        .zip(reference)
        .filter(|(m, r)| **m > 0.0 && **r > 0.0)
        .map(|(m, r)| (m / r).log2())
        .collect();
    let rejected = model.len() - logs.len();
    if logs.is_empty() {
        return Err(Error::EmptyComparison);
    }
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(RatioDistortion { sigma_r: var.sqrt() * LN_2, used: logs.len(), rejected })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalDistance {
    pub delta: Vec<i32>,
    pub mean_abs: f64,
    pub mean_signed: f64,
}

pub fn categorical_distance(model: &[CategoryLabel], reference: &[CategoryLabel]) -> Result<CategoricalDistance> {
    if model.len() != reference.len() {
        return Err(Error::DimensionMismatch { expected: reference.len(), got: model.len() });
    }
    if model.is_empty() {
        return Err(Error::EmptyComparison);
    }
    let delta: Vec<i32> = model.iter().zip(reference).map(|(m, r)| m.code() - r.code()).collect();
    let n = delta.len() as f64;
    let mean_abs = delta.iter().map(|d| d.abs() as f64).sum::<f64>() / n;
    let mean_signed = delta.iter().map(|&d| d as f64).sum::<f64>() / n;
    Ok(CategoricalDistance { delta, mean_abs, mean_signed })
}

/// Row-conditional probabilities `p(model class | reference class)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Confusion {
    /// `None` rows correspond to reference classes with no members.
    pub probs: [Option<[f64; 3]>; 3],
    pub counts: [[usize; 3]; 3],
    pub reference_totals: [usize; 3],
    pub model_totals: [usize; 3],
}

pub fn confusion_probs(model: &[CategoryLabel], reference: &[CategoryLabel]) -> Result<Confusion> {
    if model.len() != reference.len() {
        return Err(Error::DimensionMismatch { expected: reference.len(), got: model.len() });
    }
    let mut counts = [[0usize; 3]; 3];
    for (m, r) in model.iter().zip(reference) {
        counts[r.index()][m.index()] += 1;
    }
    let mut reference_totals = [0; 3];
    let mut model_totals = [0; 3];
    for r in 0..3 {
        for m in 0..3 {
            reference_totals[r] += counts[r][m];
            model_totals[m] += counts[r][m];
        }
    }
    let mut probs = [None; 3];
    for r in 0..3 {
        if reference_totals[r] > 0 {
            let t = reference_totals[r] as f64;
            probs[r] = Some([counts[r][0] as f64 / t, counts[r][1] as f64 / t, counts[r][2] as f64 / t]);
        }
    }
    Ok(Confusion { probs, counts, reference_totals, model_totals })
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// `1 - Phi_N((threshold - mean) / std)`; an indicator when `std = 0`.
pub fn hg_probability(mean: f64, std: f64, threshold: f64) -> f64 {
    if std <= 0.0 {
        return if mean >= threshold { 1.0 } else { 0.0 };
    }
    // 1 - Phi(z) = Phi(-z), evaluated without cancellation
    normal_cdf((mean - threshold) / std)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelChange {
    pub index: usize,
    pub mean: f64,
    pub before: CategoryLabel,
    pub after: CategoryLabel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityReport {
    pub changes: Vec<LabelChange>,
    pub before_counts: [usize; 3],
    pub after_counts: [usize; 3],
}

pub fn threshold_sensitivity(means: &[f64], base: Thresholds, perturbed: Thresholds) -> SensitivityReport {
    let mut changes = Vec::new();
    let mut before_counts = [0; 3];
    let mut after_counts = [0; 3];
    for (index, &mean) in means.iter().enumerate() {
        let before = classify(mean, base);
        let after = classify(mean, perturbed);
        before_counts[before.index()] += 1;
        after_counts[after.index()] += 1;
        if before != after {
            changes.push(LabelChange { index, mean, before, after });
        }
    }
    SensitivityReport { changes, before_counts, after_counts }
}

/// Whether `point` lies in the half-open box `(lo, hi]` of `cell`; a
/// zero-extent axis must match exactly.
pub fn contains(cell: &SupportSample, point: &[f64]) -> bool {
    cell.centroid.iter().zip(&cell.extent).zip(point).all(|((c, h), p)| {
        if *h == 0.0 {
            p == c
        } else {
            *p > c - 0.5 * h && *p <= c + 0.5 * h
        }
    })
}

/// Mean reference value per cell over the references whose centroid falls
/// inside it, `None` for cells holding none.
pub fn aggregate_to_cells(cells: &[SupportSample], references: &[SupportSample]) -> Vec<Option<f64>> {
    cells
        .iter()
        .map(|c| {
            let (sum, n) = references
                .iter()
                .filter(|r| contains(c, &r.centroid))
                .fold((0.0, 0usize), |(s, n), r| (s + r.value, n + 1));
            (n > 0).then(|| sum / n as f64)
        })
        .collect()
}
