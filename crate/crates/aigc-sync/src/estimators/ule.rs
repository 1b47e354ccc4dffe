//! Linear unbiased estimation of the timing offset from sorted arrivals,
//! trained on Monte Carlo mean/covariance statistics of the sorted vector.

use crate::error::{Error, Result};
use crate::order_stats::{ridge_if_needed, SortedArrivalStats};
use nalgebra::DVector;

/// Fitted weights: tau_hat = a . y + b, with the weights chosen as the
/// minimum-variance unbiased linear combination under the training
/// covariance (a proportional to C^-1 1, normalized to sum to one).
#[derive(Debug, Clone, PartialEq)]
pub struct UleWeights {
    pub a: DVector<f64>,
    pub b: f64,
    pub u: DVector<f64>,
    /// Training-covariance prediction of the estimator MSE, 1 / (1' C^-1 1).
    pub predicted_mse: f64,
}

impl UleWeights {
    pub fn n(&self) -> usize {
        self.a.len()
    }
}

/// Fit the linear estimator on the leading n coordinates of the training
/// statistics. The covariance block gets a diagonal ridge when it is near
/// singular; an indefinite or degenerate block is reported, not papered over.
pub fn ule_fit(stats: &SortedArrivalStats, n: usize) -> Result<UleWeights> {
    if n < 1 {
        return Err(Error::InvalidParameter("estimator size must be at least 1".into()));
    }
    if n > stats.u.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimator size {n} exceeds trained dimension {}",
            stats.u.len()
        )));
    }
    let mut c = stats.c.view((0, 0), (n, n)).into_owned();
    ridge_if_needed(&mut c);
    let chol = c.cholesky().ok_or_else(|| {
        Error::IllConditioned("sorted-arrival covariance block is not positive definite".into())
    })?;
    let ones = DVector::from_element(n, 1.0);
    let z = chol.solve(&ones);
    let total = z.sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::IllConditioned(format!(
            "covariance inverse has non-positive row-sum total {total}"
        )));
    }
    let a = z / total;
    let u = stats.u.rows(0, n).into_owned();
    let b = -a.dot(&u);
    Ok(UleWeights { a, b, u, predicted_mse: 1.0 / total })
}

/// Apply fitted weights to the first n sorted arrivals.
pub fn ule_estimate(w: &UleWeights, y: &[f64]) -> Result<f64> {
    let n = w.n();
    if y.len() < n {
        return Err(Error::DimensionMismatch(format!(
            "{} arrivals for an estimator of size {n}",
            y.len()
        )));
    }
    Ok(w.a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>() + w.b)
}
