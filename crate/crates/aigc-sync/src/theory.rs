//! Closed-form performance predictions for the estimators: exact MSE of the
//! two-arrival linear estimator, blind and decision-feedback MSE as functions
//! of the alphabet geometry and the detection matrix, and the information
//! bound curve.

use crate::channel::ModulationScheme;
use crate::error::{Error, Result};
use crate::estimators::blind::ConfusionMatrix;
use crate::ig::{crlb, IgParams};
use crate::order_stats::{os_cov, os_moments, OrderStatSpec};

/// Per-level first-arrival statistics: v_j and sigma2_j are the mean and
/// variance of the minimum of L_j iid hitting times.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelStats {
    pub v: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub priors: Vec<f64>,
}

impl LevelStats {
    pub fn for_scheme(scheme: &ModulationScheme, p: &IgParams) -> Result<Self> {
        let mut v = Vec::with_capacity(scheme.m);
        let mut sigma2 = Vec::with_capacity(scheme.m);
        for &level in &scheme.levels {
            let m = os_moments(&OrderStatSpec::new(1, level as usize, *p)?)?;
            v.push(m.mean);
            sigma2.push(m.variance);
        }
        Ok(LevelStats { v, sigma2, priors: scheme.priors.clone() })
    }

    pub fn m(&self) -> usize {
        self.v.len()
    }
}

/// Second-order statistics of the two sorted arrivals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ule2Moments {
    pub var1: f64,
    pub var2: f64,
    pub cov: f64,
}

/// Assemble the two-arrival moments from quadrature variances and the Monte
/// Carlo covariance estimate.
pub fn ule2_moments(p: &IgParams) -> Result<Ule2Moments> {
    let var1 = os_moments(&OrderStatSpec::new(1, 2, *p)?)?.variance;
    let var2 = os_moments(&OrderStatSpec::new(2, 2, *p)?)?.variance;
    let cov = os_cov(1, 2, 2, p)?.value;
    Ok(Ule2Moments { var1, var2, cov })
}

/// Exact MSE of the minimum-variance unbiased linear combination of two
/// sorted arrivals: (V1 V2 - Cov^2) / (V1 + V2 - 2 Cov).
pub fn ule2_theoretical_mse(m: &Ule2Moments) -> Result<f64> {
    let denom = m.var1 + m.var2 - 2.0 * m.cov;
    if !(denom > 1e-12 * (m.var1 + m.var2)) {
        return Err(Error::IllConditioned(format!(
            "two-arrival weight denominator {denom} is not positive"
        )));
    }
    Ok((m.var1 * m.var2 - m.cov * m.cov) / denom)
}

/// MSE of the blind one-arrival estimator: the prior-weighted first-arrival
/// variance plus the spread of the level means, each unordered pair counted
/// once with weight p_i p_j.
pub fn blind_ule1_mse(ls: &LevelStats) -> f64 {
    decision_directed_floor(ls) + pair_sum(ls, |i, j| ls.priors[i] * ls.priors[j])
}

/// Detection-free error floor: the prior-weighted first-arrival variance.
pub fn decision_directed_floor(ls: &LevelStats) -> f64 {
    ls.priors
        .iter()
        .zip(&ls.sigma2)
        .map(|(p, s)| p * s)
        .sum()
}

fn pair_sum<F: Fn(usize, usize) -> f64>(ls: &LevelStats, weight: F) -> f64 {
    let mut total = 0.0;
    for i in 0..ls.m() {
        for j in (i + 1)..ls.m() {
            let gap = ls.v[j] - ls.v[i];
            total += gap * gap * weight(i, j);
        }
    }
    total
}

/// MSE of the decision-feedback estimator under a detection matrix q:
/// the floor plus each pair's squared mean gap weighted by the probability of
/// confusing that pair in either direction.
pub fn df_mse(ls: &LevelStats, q: &ConfusionMatrix) -> Result<f64> {
    if q.dim() != ls.m() {
        return Err(Error::DimensionMismatch(format!(
            "detection matrix of size {} for an alphabet of {}",
            q.dim(),
            ls.m()
        )));
    }
    let qm = q.q();
    Ok(decision_directed_floor(ls)
        + pair_sum(ls, |i, j| ls.priors[i] * qm[(i, j)] + ls.priors[j] * qm[(j, i)]))
}

/// Pairwise comparison of feedback against the blind estimator: the margin of
/// pair (i, j) is p_i p_j - (p_i q_ij + p_j q_ji), and feedback is predicted
/// to improve when every margin is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DfImprovement {
    pub improves: bool,
    pub margins: Vec<(usize, usize, f64)>,
}

pub fn df_improves(ls: &LevelStats, q: &ConfusionMatrix) -> Result<DfImprovement> {
    if q.dim() != ls.m() {
        return Err(Error::DimensionMismatch(format!(
            "detection matrix of size {} for an alphabet of {}",
            q.dim(),
            ls.m()
        )));
    }
    let qm = q.q();
    let mut margins = Vec::new();
    for i in 0..ls.m() {
        for j in (i + 1)..ls.m() {
            let margin = ls.priors[i] * ls.priors[j]
                - (ls.priors[i] * qm[(i, j)] + ls.priors[j] * qm[(j, i)]);
            margins.push((i, j, margin));
        }
    }
    Ok(DfImprovement { improves: margins.iter().all(|&(_, _, m)| m > 0.0), margins })
}

/// Information bound as a function of the per-symbol molecule count.
pub fn crlb_curve(p: &IgParams, n_values: &[usize]) -> Result<Vec<f64>> {
    n_values.iter().map(|&n| crlb(p, n)).collect()
}
