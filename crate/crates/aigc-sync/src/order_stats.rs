//! Moments of hitting-time order statistics, by quadrature where a closed
//! integral exists and by seeded Monte Carlo where it does not, plus the
//! sorted-arrival mean/covariance summary used to train linear estimators.

use crate::channel::ReleaseSchedule;
use crate::error::{Error, Result};
use crate::ig::{ig_cdf, ig_pdf, ig_sample, integration_upper_limit, IgParams};
use crate::numeric::{integrate, ln_factorial};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which order statistic of how many iid hitting times, 1-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderStatSpec {
    i: usize,
    n: usize,
    params: IgParams,
}

impl OrderStatSpec {
    pub fn new(i: usize, n: usize, params: IgParams) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidParameter("sample size must be at least 1".into()));
        }
        if i < 1 || i > n {
            return Err(Error::InvalidParameter(format!(
                "order statistic index must satisfy 1 <= i <= n, got i={i}, n={n}"
            )));
        }
        Ok(OrderStatSpec { i, n, params })
    }

    pub fn i(&self) -> usize {
        self.i
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> IgParams {
        self.params
    }
}

/// Mean and variance of one order statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OsMoments {
    pub mean: f64,
    pub variance: f64,
}

fn survival(t: f64, p: &IgParams) -> f64 {
    (1.0 - ig_cdf(t, p)).max(0.0)
}

/// E[min of n] via the survival identity: the mean of a positive variable is
/// the integral of its survival function, and min survival is S(t)^n.
pub fn os_min_mean(n: usize, p: &IgParams) -> Result<f64> {
    if n < 1 {
        return Err(Error::InvalidParameter("sample size must be at least 1".into()));
    }
    let hi = integration_upper_limit(p);
    integrate(|t| survival(t, p).powi(n as i32), 0.0, hi, 1e-10)
}

/// Density of the i-th of n iid hitting times.
fn os_pdf(t: f64, i: usize, n: usize, p: &IgParams) -> f64 {
    let f = ig_pdf(t, p);
    if f == 0.0 {
        return 0.0;
    }
    let cdf = ig_cdf(t, p);
    let coef =
        (ln_factorial(n) - ln_factorial(i - 1) - ln_factorial(n - i)).exp();
    coef * cdf.powi(i as i32 - 1) * (1.0 - cdf).powi((n - i) as i32) * f
}

/// Mean and variance of the i-th of n iid hitting times, by quadrature.
pub fn os_moments(spec: &OrderStatSpec) -> Result<OsMoments> {
    let p = spec.params;
    let (i, n) = (spec.i, spec.n);
    let hi = integration_upper_limit(&p);
    let mean = integrate(|t| t * os_pdf(t, i, n, &p), 0.0, hi, 1e-10)?;
    let second = integrate(|t| t * t * os_pdf(t, i, n, &p), 0.0, hi, 1e-8)?;
    Ok(OsMoments { mean, variance: second - mean * mean })
}

/// E[T(i) T(j)] for i < j by nested quadrature over the joint order-statistic
/// density. Exact but O(evals^2), so it is restricted to n <= 3 and serves as
/// the independent cross-check for the Monte Carlo covariance route.
pub fn os_cross_moment_quad(i: usize, j: usize, n: usize, p: &IgParams) -> Result<f64> {
    if n < 1 || n > 3 {
        return Err(Error::InvalidParameter(format!(
            "nested quadrature for cross moments is limited to n in 1..=3, got {n}"
        )));
    }
    if i < 1 || j <= i || j > n {
        return Err(Error::InvalidParameter(format!(
            "cross moment needs 1 <= i < j <= n, got i={i}, j={j}, n={n}"
        )));
    }
    let hi = integration_upper_limit(p);
    let coef = (ln_factorial(n)
        - ln_factorial(i - 1)
        - ln_factorial(j - i - 1)
        - ln_factorial(n - j))
    .exp();
    let outer = integrate(
        |s| {
            let fs = ig_pdf(s, p);
            if fs == 0.0 {
                return 0.0;
            }
            let cdf_s = ig_cdf(s, p);
            let inner = integrate(
                |t| {
                    let ft = ig_pdf(t, p);
                    if ft == 0.0 {
                        return 0.0;
                    }
                    let gap = (ig_cdf(t, p) - cdf_s).max(0.0);
                    t * gap.powi((j - i - 1) as i32)
                        * survival(t, p).powi((n - j) as i32)
                        * ft
                },
                s,
                hi,
                1e-10,
            )
            .unwrap_or(f64::NAN);
            s * cdf_s.powi(i as i32 - 1) * fs * inner
        },
        0.0,
        hi,
        1e-7,
    )?;
    Ok(coef * outer)
}

/// A Monte Carlo moment estimate together with its standard error, measured
/// from the spread across independent substream batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovEstimate {
    pub value: f64,
    pub se: f64,
}

const OS_COV_DEFAULT_TRIALS: u64 = 10_000_000;
const OS_COV_DEFAULT_SEED: u64 = 0x00c0_ffee;
const OS_COV_BATCHES: u64 = 32;
const STATS_BATCH: u64 = 65_536;

/// Cov[T(i), T(j)] of n iid hitting times (i = j gives the variance), using
/// the default trial budget and a fixed internal seed so repeated calls agree
/// bit for bit.
pub fn os_cov(i: usize, j: usize, n: usize, p: &IgParams) -> Result<CovEstimate> {
    os_cov_with(i, j, n, p, OS_COV_DEFAULT_TRIALS, OS_COV_DEFAULT_SEED)
}

/// Cov[T(i), T(j)] with an explicit trial budget and seed. The budget is
/// split over 32 independent batches; the reported standard error is the
/// spread of the per-batch covariances.
pub fn os_cov_with(
    i: usize,
    j: usize,
    n: usize,
    p: &IgParams,
    trials: u64,
    seed: u64,
) -> Result<CovEstimate> {
    if n < 1 || i < 1 || i > n || j < 1 || j > n {
        return Err(Error::InvalidParameter(format!(
            "covariance needs 1 <= i, j <= n, got i={i}, j={j}, n={n}"
        )));
    }
    if trials < 100_000 {
        return Err(Error::InvalidParameter(format!(
            "covariance estimation needs at least 100000 trials, got {trials}"
        )));
    }
    let per_batch = trials / OS_COV_BATCHES;
    let (ia, ja) = (i - 1, j - 1);
    let mu = p.mu();
    let mut batch_cov = Vec::with_capacity(OS_COV_BATCHES as usize);
    let mut draw = vec![0.0f64; n];
    for batch in 0..OS_COV_BATCHES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((3u64 << 56) | batch);
        let (mut sa, mut sb, mut sab) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..per_batch {
            for slot in draw.iter_mut() {
                *slot = ig_sample(&mut rng, p);
            }
            draw.sort_unstable_by(f64::total_cmp);
            let a = draw[ia] - mu;
            let b = draw[ja] - mu;
            sa += a;
            sb += b;
            sab += a * b;
        }
        let m = per_batch as f64;
        batch_cov.push((sab - sa * sb / m) / (m - 1.0));
    }
    let k = batch_cov.len() as f64;
    let value = batch_cov.iter().sum::<f64>() / k;
    let spread =
        batch_cov.iter().map(|c| (c - value) * (c - value)).sum::<f64>() / (k - 1.0);
    Ok(CovEstimate { value, se: (spread / k).sqrt() })
}

/// Mean vector and covariance matrix of the globally sorted arrivals produced
/// by a release schedule, estimated by seeded Monte Carlo at offset zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedArrivalStats {
    pub u: DVector<f64>,
    pub c: DMatrix<f64>,
    pub schedule_hash: u64,
    pub mc_trials: u64,
}

/// Estimate the sorted-arrival statistics for one release schedule.
///
/// Trials are consumed in independent substream batches so the result depends
/// only on (seed, trials), and accumulation happens around a per-coordinate
/// shift (sorted release times plus the mean hitting time) to keep the
/// covariance sums well conditioned. The covariance uses the unbiased n-1
/// normalization and is symmetrized exactly.
pub fn sorted_arrival_stats(
    schedule: &ReleaseSchedule,
    p: &IgParams,
    trials: u64,
    seed: u64,
) -> Result<SortedArrivalStats> {
    let n = schedule.x.len();
    if n == 0 {
        return Err(Error::InvalidParameter("release schedule must be nonempty".into()));
    }
    if trials < 10_000 {
        return Err(Error::InvalidParameter(format!(
            "sorted-arrival statistics need at least 10000 trials, got {trials}"
        )));
    }
    let mut shift = schedule.x.clone();
    shift.sort_unstable_by(f64::total_cmp);
    for v in &mut shift {
        *v += p.mu();
    }

    let mut sum = vec![0.0f64; n];
    let mut outer = vec![0.0f64; n * (n + 1) / 2];
    let mut draw = vec![0.0f64; n];
    let mut done = 0u64;
    let mut batch = 0u64;
    while done < trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((1u64 << 56) | batch);
        batch += 1;
        let this = STATS_BATCH.min(trials - done);
        for _ in 0..this {
            for (slot, &x) in draw.iter_mut().zip(&schedule.x) {
                *slot = x + ig_sample(&mut rng, p);
            }
            draw.sort_unstable_by(f64::total_cmp);
            for (slot, &s) in draw.iter_mut().zip(&shift) {
                *slot -= s;
            }
            let mut idx = 0usize;
            for r in 0..n {
                sum[r] += draw[r];
                for c in 0..=r {
                    outer[idx] += draw[r] * draw[c];
                    idx += 1;
                }
            }
        }
        done += this;
    }

    let m = trials as f64;
    let mean_shifted: Vec<f64> = sum.iter().map(|&s| s / m).collect();
    let mut c = DMatrix::zeros(n, n);
    let mut idx = 0usize;
    for r in 0..n {
        for col in 0..=r {
            let cov = (outer[idx] - m * mean_shifted[r] * mean_shifted[col]) / (m - 1.0);
            c[(r, col)] = cov;
            c[(col, r)] = cov;
            idx += 1;
        }
    }
    let u = DVector::from_iterator(
        n,
        mean_shifted.iter().zip(&shift).map(|(&a, &s)| a + s),
    );
    Ok(SortedArrivalStats { u, c, schedule_hash: schedule.content_hash(), mc_trials: trials })
}

/// Add a small diagonal load when the smallest eigenvalue is tiny relative to
/// the trace, so downstream Cholesky factorizations stay stable. Returns
/// whether a ridge was applied.
pub(crate) fn ridge_if_needed(m: &mut DMatrix<f64>) -> bool {
    let n = m.nrows();
    let trace: f64 = m.diagonal().sum();
    let min_eig = m.clone().symmetric_eigenvalues().min();
    if min_eig < 1e-12 * trace {
        let ridge = 1e-10 * trace / n as f64;
        for k in 0..n {
            m[(k, k)] += ridge;
        }
        true
    } else {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::build_release_schedule;

    fn standard() -> IgParams {
        IgParams::new(10.0, 8.1955).unwrap()
    }

    #[test]
    fn minimum_means_match_frozen_survival_integrals() {
        let p = standard();
        let expected = [
            10.0,
            5.1147853800186267,
            3.7359682812337511,
            3.085831445962091,
            2.702855741026879,
            2.447492050058615,
            2.2633142725483699,
            2.1231184616630183,
            2.012135568412881,
            1.9216296811819757,
            1.8460872464359492,
            1.7818471781843406,
            1.7263771297356207,
            1.6778657438854367,
            1.6349805382626581,
            1.5967177164321296,
        ];
        for (n, &want) in expected.iter().enumerate() {
            let got = os_min_mean(n + 1, &p).unwrap();
            assert!((got - want).abs() < 1e-8, "n={}: {got} vs {want}", n + 1);
        }
    }

    #[test]
    fn minimum_mean_decreases_with_sample_size() {
        let p = standard();
        let mut prev = f64::INFINITY;
        for n in 1..=10 {
            let m = os_min_mean(n, &p).unwrap();
            assert!(m < prev, "n={n}: {m} not below {prev}");
            prev = m;
        }
        assert!(os_min_mean(0, &p).is_err());
    }

    #[test]
    fn spec_validation_rejects_out_of_range_indexes() {
        let p = standard();
        assert!(OrderStatSpec::new(0, 2, p).is_err());
        assert!(OrderStatSpec::new(3, 2, p).is_err());
        assert!(OrderStatSpec::new(1, 0, p).is_err());
        assert!(OrderStatSpec::new(2, 2, p).is_ok());
    }

    #[test]
    fn order_stat_moments_match_frozen_quadrature_values() {
        let p = standard();
        let cases = [
            (1, 1, 10.0, 122.01818070892585),
            (1, 2, 5.1147853800172465, 18.994580055672976),
            (2, 2, 14.885214619981292, 177.31113759563539),
            (1, 4, 3.085831445962218, 3.7192642361042072),
            (2, 4, 5.686378787048791, 11.979710240855525),
            (1, 8, 2.1231184616630334, 0.99720462276454747),
        ];
        for &(i, n, mean, var) in &cases {
            let m = os_moments(&OrderStatSpec::new(i, n, p).unwrap()).unwrap();
            assert!((m.mean - mean).abs() < 1e-7, "({i},{n}) mean {} vs {mean}", m.mean);
            assert!(
                (m.variance - var).abs() < 1e-6,
                "({i},{n}) var {} vs {var}",
                m.variance
            );
        }
    }

    #[test]
    fn first_order_statistic_mean_agrees_with_survival_route() {
        let p = standard();
        let via_pdf = os_moments(&OrderStatSpec::new(1, 4, p).unwrap()).unwrap().mean;
        let via_survival = os_min_mean(4, &p).unwrap();
        assert!((via_pdf - via_survival).abs() < 1e-8, "{via_pdf} vs {via_survival}");
    }

    #[test]
    fn order_stat_means_sum_to_the_raw_mean_total() {
        let p = standard();
        let m1 = os_moments(&OrderStatSpec::new(1, 2, p).unwrap()).unwrap().mean;
        let m2 = os_moments(&OrderStatSpec::new(2, 2, p).unwrap()).unwrap().mean;
        assert!((m1 + m2 - 2.0 * p.mu()).abs() < 1e-6, "{m1} + {m2}");
    }

    #[test]
    fn pair_product_moment_of_two_matches_the_independence_identity() {
        // T(1)*T(2) = T1*T2 for n = 2, so the product moment is exactly mu^2.
        let p = standard();
        let got = os_cross_moment_quad(1, 2, 2, &p).unwrap();
        assert!((got / 100.0 - 1.0).abs() < 1e-6, "{got}");
    }

    #[test]
    fn cross_moment_rejects_unsupported_shapes() {
        let p = standard();
        assert!(os_cross_moment_quad(1, 2, 4, &p).is_err());
        assert!(os_cross_moment_quad(2, 2, 2, &p).is_err());
        assert!(os_cross_moment_quad(2, 1, 2, &p).is_err());
        assert!(os_cross_moment_quad(1, 3, 2, &p).is_err());
    }

    #[test]
    fn monte_carlo_variance_matches_quadrature_within_its_error_bar() {
        let p = standard();
        for &(i, n) in &[(1usize, 2usize), (2, 2), (1, 4)] {
            let mc = os_cov_with(i, i, n, &p, 400_000, 5).unwrap();
            let quad = os_moments(&OrderStatSpec::new(i, n, p).unwrap()).unwrap().variance;
            assert!(
                (mc.value - quad).abs() < 4.0 * mc.se,
                "({i},{n}): mc {} +- {} vs quad {quad}",
                mc.value,
                mc.se
            );
        }
    }

    #[test]
    fn monte_carlo_cross_covariance_matches_nested_quadrature() {
        let p = standard();
        for &(i, j, n) in &[(1usize, 2usize, 2usize), (1, 2, 3), (2, 3, 3)] {
            let mc = os_cov_with(i, j, n, &p, 400_000, 6).unwrap();
            let mi = os_moments(&OrderStatSpec::new(i, n, p).unwrap()).unwrap().mean;
            let mj = os_moments(&OrderStatSpec::new(j, n, p).unwrap()).unwrap().mean;
            let quad = os_cross_moment_quad(i, j, n, &p).unwrap() - mi * mj;
            assert!(
                (mc.value - quad).abs() < 4.0 * mc.se,
                "({i},{j},{n}): mc {} +- {} vs quad {quad}",
                mc.value,
                mc.se
            );
        }
    }

    #[test]
    fn paired_order_statistics_of_two_are_positively_correlated() {
        let p = standard();
        let cov = os_cov_with(1, 2, 2, &p, 200_000, 7).unwrap();
        assert!(cov.value > 0.0, "{}", cov.value);
        // Var T(1) + Var T(2) + 2 Cov = Var(T1 + T2) = 2 Var T.
        let v1 = os_moments(&OrderStatSpec::new(1, 2, p).unwrap()).unwrap().variance;
        let v2 = os_moments(&OrderStatSpec::new(2, 2, p).unwrap()).unwrap().variance;
        let total = v1 + v2 + 2.0 * cov.value;
        assert!(
            (total - 2.0 * p.variance()).abs() < 2.0 * 3.0 * cov.se,
            "{total} vs {}",
            2.0 * p.variance()
        );
    }

    #[test]
    fn covariance_estimation_validates_inputs() {
        let p = standard();
        assert!(os_cov_with(0, 1, 2, &p, 200_000, 1).is_err());
        assert!(os_cov_with(1, 3, 2, &p, 200_000, 1).is_err());
        assert!(os_cov_with(1, 1, 2, &p, 50_000, 1).is_err());
    }

    #[test]
    fn single_release_stats_match_order_stat_quadrature() {
        let p = standard();
        let trials = 200_000u64;
        for &n in &[1usize, 2, 4, 8] {
            let schedule = build_release_schedule(&[n as u32], 30.0).unwrap();
            let stats = sorted_arrival_stats(&schedule, &p, trials, 11).unwrap();
            for i in 0..n {
                let om = os_moments(&OrderStatSpec::new(i + 1, n, p).unwrap()).unwrap();
                let se = (stats.c[(i, i)] / trials as f64).sqrt();
                assert!(
                    (stats.u[i] - om.mean).abs() < 3.0 * se,
                    "n={n}, i={}: {} vs {} (3se {})",
                    i + 1,
                    stats.u[i],
                    om.mean,
                    3.0 * se
                );
            }
        }
    }

    #[test]
    fn two_release_stats_match_frozen_pair_values() {
        let p = standard();
        let trials = 200_000u64;
        let schedule = build_release_schedule(&[2], 30.0).unwrap();
        let stats = sorted_arrival_stats(&schedule, &p, trials, 13).unwrap();
        let cov_true = 100.0 - 5.1147853800172465 * 14.885214619981292;
        assert!((stats.c[(0, 0)] - 18.994580055672976).abs() < 1.0, "{}", stats.c[(0, 0)]);
        assert!((stats.c[(1, 1)] - 177.31113759563539).abs() < 6.0, "{}", stats.c[(1, 1)]);
        assert!((stats.c[(0, 1)] - cov_true).abs() < 1.0, "{}", stats.c[(0, 1)]);
        assert_eq!(stats.c[(0, 1)], stats.c[(1, 0)]);
        assert_eq!(stats.schedule_hash, schedule.content_hash());
        assert_eq!(stats.mc_trials, trials);
    }

    #[test]
    fn widely_separated_releases_decorrelate() {
        let p = standard();
        let trials = 100_000u64;
        let schedule = build_release_schedule(&[1, 1], 100.0 * p.mu()).unwrap();
        let stats = sorted_arrival_stats(&schedule, &p, trials, 17).unwrap();
        let se = (stats.c[(0, 0)] * stats.c[(1, 1)] / trials as f64).sqrt();
        assert!(stats.c[(0, 1)].abs() < 3.0 * se, "{} vs 3se {}", stats.c[(0, 1)], 3.0 * se);
        assert!((stats.u[0] - p.mu()).abs() < 0.2);
        assert!((stats.u[1] - (1000.0 + p.mu())).abs() < 0.2);
    }

    #[test]
    fn sorted_means_are_nondecreasing_and_sum_to_the_release_total() {
        let p = standard();
        let trials = 100_000u64;
        for symbols in [vec![4u32], vec![2, 1, 1], vec![1, 3]] {
            let schedule = build_release_schedule(&symbols, 15.0).unwrap();
            let stats = sorted_arrival_stats(&schedule, &p, trials, 19).unwrap();
            assert!(stats.u.iter().zip(stats.u.iter().skip(1)).all(|(a, b)| a <= b));
            let n = schedule.x.len();
            let expectation: f64 =
                schedule.x.iter().sum::<f64>() + n as f64 * p.mu();
            let total: f64 = stats.u.iter().sum();
            let ones = DVector::from_element(n, 1.0);
            let se = ((&stats.c * &ones).dot(&ones) / trials as f64).sqrt();
            assert!(
                (total - expectation).abs() < 3.0 * se,
                "{symbols:?}: {total} vs {expectation} (3se {})",
                3.0 * se
            );
        }
        // Quadrature route for the same identity with a single release slot.
        let sum_quad: f64 = (1..=4)
            .map(|i| os_moments(&OrderStatSpec::new(i, 4, standard()).unwrap()).unwrap().mean)
            .sum();
        assert!((sum_quad - 4.0 * 10.0).abs() < 1e-6, "{sum_quad}");
    }

    #[test]
    fn covariance_matrix_is_symmetric_and_near_positive_semidefinite() {
        let p = standard();
        let schedule = build_release_schedule(&[2, 2], 30.0).unwrap();
        let stats = sorted_arrival_stats(&schedule, &p, 50_000, 23).unwrap();
        assert_eq!(stats.c, stats.c.transpose());
        let trace = stats.c.diagonal().sum();
        let min_eig = stats.c.clone().symmetric_eigenvalues().min();
        assert!(min_eig >= -1e-9 * trace, "min eigenvalue {min_eig}, trace {trace}");
    }

    #[test]
    fn stats_estimation_is_deterministic_and_validates_trials() {
        let p = standard();
        let schedule = build_release_schedule(&[2, 1], 30.0).unwrap();
        let a = sorted_arrival_stats(&schedule, &p, 20_000, 29).unwrap();
        let b = sorted_arrival_stats(&schedule, &p, 20_000, 29).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.c, b.c);
        let c = sorted_arrival_stats(&schedule, &p, 20_000, 30).unwrap();
        assert_ne!(a.u, c.u);
        assert!(sorted_arrival_stats(&schedule, &p, 9_999, 29).is_err());
    }

    #[test]
    fn ridge_loads_only_near_singular_matrices() {
        let mut singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(ridge_if_needed(&mut singular));
        assert!(singular[(0, 0)] > 1.0 && singular[(0, 0)] < 1.0 + 1e-9);
        assert!(singular.clone().cholesky().is_some());

        let mut healthy = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let copy = healthy.clone();
        assert!(!ridge_if_needed(&mut healthy));
        assert_eq!(healthy, copy);
    }
}
