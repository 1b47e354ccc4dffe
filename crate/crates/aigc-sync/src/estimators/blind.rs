//! Blind offset estimation from the first arrival when the transmitted
//! quantity is unknown, plus the decision-feedback refinement that demodulates
//! the first symbol and re-centers on the detected level.

use crate::channel::ModulationScheme;
use crate::error::{Error, Result};
use crate::ig::IgParams;
use crate::order_stats::os_min_mean;
use nalgebra::DMatrix;

/// Expected first-arrival time for each alphabet level: the mean minimum of
/// L_j iid hitting times.
pub fn blind_v_means(scheme: &ModulationScheme, p: &IgParams) -> Result<Vec<f64>> {
    scheme
        .levels
        .iter()
        .map(|&l| os_min_mean(l as usize, p))
        .collect()
}

/// Blind one-arrival estimate: subtract the prior-weighted expected first
/// arrival from the observed one.
pub fn blind_ule1(y1: f64, scheme: &ModulationScheme, v: &[f64]) -> Result<f64> {
    if v.len() != scheme.m {
        return Err(Error::DimensionMismatch(format!(
            "{} level means for an alphabet of {}",
            v.len(),
            scheme.m
        )));
    }
    let expected: f64 = scheme.priors.iter().zip(v).map(|(p, vj)| p * vj).sum();
    Ok(y1 - expected)
}

/// Outcome of demodulating the first symbol from an offset estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectedLevel {
    /// Index into the alphabet.
    pub index: usize,
    /// The level itself.
    pub level: u32,
    /// Arrivals counted in the first symbol window.
    pub count: usize,
}

/// Count arrivals in the window (tau_hat, tau_hat + Ts] and pick the nearest
/// alphabet level; ties go to the smaller level.
pub fn demodulate_first_symbol(
    y: &[f64],
    tau_hat: f64,
    scheme: &ModulationScheme,
) -> Result<DetectedLevel> {
    if !tau_hat.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "offset estimate must be finite, got {tau_hat}"
        )));
    }
    let count = y
        .iter()
        .filter(|&&yi| yi > tau_hat && yi <= tau_hat + scheme.ts)
        .count();
    let mut best = 0usize;
    let mut best_diff = i64::MAX;
    for (j, &level) in scheme.levels.iter().enumerate() {
        let diff = (count as i64 - level as i64).abs();
        if diff < best_diff {
            best_diff = diff;
            best = j;
        }
    }
    Ok(DetectedLevel { index: best, level: scheme.levels[best], count })
}

/// Decision-feedback estimate: blind first pass, demodulate the first symbol,
/// then re-center the first arrival on the detected level's expected minimum.
pub fn df_estimate(
    y: &[f64],
    scheme: &ModulationScheme,
    v: &[f64],
) -> Result<(f64, DetectedLevel)> {
    let Some(&y1) = y.first() else {
        return Err(Error::InvalidParameter("observation must be nonempty".into()));
    };
    let blind = blind_ule1(y1, scheme, v)?;
    let detected = demodulate_first_symbol(y, blind, scheme)?;
    Ok((y1 - v[detected.index], detected))
}

/// Row-stochastic detection matrix: entry (i, j) is the probability of
/// detecting level j when level i was transmitted.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    q: DMatrix<f64>,
}

impl ConfusionMatrix {
    /// Normalize raw detection counts; a level that was never transmitted has
    /// no estimable row and is reported as an error.
    pub fn from_counts(counts: &[Vec<u64>]) -> Result<Self> {
        let m = counts.len();
        if m == 0 || counts.iter().any(|row| row.len() != m) {
            return Err(Error::DimensionMismatch(
                "detection counts must form a nonempty square matrix".into(),
            ));
        }
        let mut q = DMatrix::zeros(m, m);
        for (i, row) in counts.iter().enumerate() {
            let total: u64 = row.iter().sum();
            if total == 0 {
                return Err(Error::InvalidParameter(format!(
                    "level index {i} was never transmitted; its detection row is undefined"
                )));
            }
            for (j, &c) in row.iter().enumerate() {
                q[(i, j)] = c as f64 / total as f64;
            }
        }
        Ok(ConfusionMatrix { q })
    }

    /// Accept explicit probability rows, each summing to one.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if m == 0 || rows.iter().any(|row| row.len() != m) {
            return Err(Error::DimensionMismatch(
                "detection rows must form a nonempty square matrix".into(),
            ));
        }
        let mut q = DMatrix::zeros(m, m);
        for (i, row) in rows.iter().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidParameter(format!(
                    "detection probabilities must lie in [0, 1], row {i} is {row:?}"
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "detection row {i} sums to {total}, expected 1"
                )));
            }
            for (j, &p) in row.iter().enumerate() {
                q[(i, j)] = p;
            }
        }
        Ok(ConfusionMatrix { q })
    }

    /// Perfect detection.
    pub fn identity(m: usize) -> Self {
        ConfusionMatrix { q: DMatrix::identity(m, m) }
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }
}
