//! Iterative per-symbol refinement of the linear offset estimator: one
//! trained update direction is reused for every new symbol block, so the
//! receiver never solves more than a 3-block system no matter how long the
//! frame runs.

use crate::error::{Error, Result};
use crate::estimators::ule::ule_fit;
use crate::order_stats::{ridge_if_needed, SortedArrivalStats};
use nalgebra::DVector;

/// Which diagonal block of the inverted three-symbol covariance supplies the
/// per-symbol update weights. The middle block sees interference from both
/// sides and is the steady-state choice; the trailing block is exposed for
/// sensitivity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IuleBlock {
    Second,
    Third,
}

/// Everything the iterative estimator precomputes from training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct IulePrecompute {
    /// First-symbol weights (the plain linear fit on one symbol block).
    pub a1: DVector<f64>,
    pub u1: DVector<f64>,
    /// Per-symbol update weights, normalized to sum to one.
    pub w: DVector<f64>,
    /// Mean of one symbol block translated to its own release frame.
    pub m: DVector<f64>,
    /// Relative weight of history against one new block in the running
    /// average; equals one when blocks carry no interference.
    pub alpha: f64,
    pub n1: usize,
    pub ts: f64,
}

/// Running state: the current estimate and how many symbol blocks went in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IuleState {
    pub tau_hat: f64,
    pub symbols_used: usize,
}

fn block_sum(m: &nalgebra::DMatrix<f64>, r0: usize, c0: usize, n: usize) -> f64 {
    let mut s = 0.0;
    for r in r0..r0 + n {
        for c in c0..c0 + n {
            s += m[(r, c)];
        }
    }
    s
}

/// Derive the iterative update from three-symbol training statistics plus
/// single-symbol statistics for the initial estimate.
pub fn iule_precompute(
    stats3: &SortedArrivalStats,
    stats1: &SortedArrivalStats,
    ts: f64,
    block: IuleBlock,
) -> Result<IulePrecompute> {
    let n3 = stats3.u.len();
    if n3 == 0 || n3 % 3 != 0 {
        return Err(Error::DimensionMismatch(format!(
            "three-symbol statistics must cover 3 equal blocks, got dimension {n3}"
        )));
    }
    let n1 = n3 / 3;
    if stats1.u.len() != n1 {
        return Err(Error::DimensionMismatch(format!(
            "single-symbol statistics have dimension {}, expected {n1}",
            stats1.u.len()
        )));
    }
    if !(ts > 0.0) || !ts.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "symbol duration must be positive, got {ts}"
        )));
    }
    let mut c3 = stats3.c.clone();
    ridge_if_needed(&mut c3);
    let chol = c3.cholesky().ok_or_else(|| {
        Error::IllConditioned("three-symbol covariance is not positive definite".into())
    })?;
    let inv = chol.inverse();
    let a_sum = block_sum(&inv, 0, 0, n1);
    let b0 = match block {
        IuleBlock::Second => n1,
        IuleBlock::Third => 2 * n1,
    };
    let b_sum = block_sum(&inv, b0, b0, n1);
    if !(b_sum > 0.0) {
        return Err(Error::IllConditioned(format!(
            "update block has non-positive weight total {b_sum}"
        )));
    }
    let mut w = DVector::zeros(n1);
    for i in 0..n1 {
        let mut col = 0.0;
        for r in b0..b0 + n1 {
            col += inv[(r, b0 + i)];
        }
        w[i] = col / b_sum;
    }
    let block_index = (b0 / n1) as f64;
    let m = DVector::from_iterator(
        n1,
        (0..n1).map(|i| stats3.u[b0 + i] - block_index * ts),
    );
    let first = ule_fit(stats1, n1)?;
    Ok(IulePrecompute {
        a1: first.a,
        u1: first.u,
        w,
        m,
        alpha: a_sum / b_sum,
        n1,
        ts,
    })
}

/// Estimate from the first symbol block alone.
pub fn iule_init(pre: &IulePrecompute, y: &[f64]) -> Result<IuleState> {
    if y.len() < pre.n1 {
        return Err(Error::DimensionMismatch(format!(
            "{} arrivals for a first block of {}",
            y.len(),
            pre.n1
        )));
    }
    let tau = pre
        .a1
        .iter()
        .zip(y)
        .map(|(ai, yi)| ai * yi)
        .sum::<f64>()
        - pre.a1.dot(&pre.u1);
    Ok(IuleState { tau_hat: tau, symbols_used: 1 })
}

/// Fold one more symbol block into the running estimate. The new block forms
/// its own offset reading, and the history is kept with weight alpha + k - 1
/// against the newcomer, which telescopes to a plain running average when
/// alpha is one.
pub fn iule_step(pre: &IulePrecompute, state: &IuleState, y_block: &[f64]) -> Result<IuleState> {
    if y_block.len() != pre.n1 {
        return Err(Error::DimensionMismatch(format!(
            "{} arrivals in a block of {}",
            y_block.len(),
            pre.n1
        )));
    }
    let k = state.symbols_used;
    let release = k as f64 * pre.ts;
    let tau_new: f64 = pre
        .w
        .iter()
        .zip(y_block)
        .zip(pre.m.iter())
        .map(|((wi, yi), mi)| wi * (yi - release - mi))
        .sum();
    let denom = pre.alpha + k as f64;
    let tau = ((pre.alpha + k as f64 - 1.0) * state.tau_hat + tau_new) / denom;
    Ok(IuleState { tau_hat: tau, symbols_used: k + 1 })
}

/// Run the full pipeline over k_total symbol blocks of a sorted observation.
pub fn iule_estimate(pre: &IulePrecompute, y: &[f64], k_total: usize) -> Result<f64> {
    if k_total < 1 {
        return Err(Error::InvalidParameter("symbol count must be at least 1".into()));
    }
    if y.len() != k_total * pre.n1 {
        return Err(Error::DimensionMismatch(format!(
            "{} arrivals for {k_total} blocks of {}",
            y.len(),
            pre.n1
        )));
    }
    let mut state = iule_init(pre, &y[..pre.n1])?;
    for k in 1..k_total {
        state = iule_step(pre, &state, &y[k * pre.n1..(k + 1) * pre.n1])?;
    }
    Ok(state.tau_hat)
}
