//! Channel simulation: quantity-based modulation schemes, release schedules,
//! and sorted receiver observations with an unknown timing offset.

use crate::error::{Error, Result};
use crate::ig::{ig_sample, IgParams};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// Quantity-based modulation alphabet: symbol j releases `levels[j]` molecules,
/// drawn with probability `priors[j]`, every `ts` seconds, for `k` symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationScheme {
    pub m: usize,
    pub levels: Vec<u32>,
    pub priors: Vec<f64>,
    pub ts: f64,
    pub k: usize,
}

impl ModulationScheme {
    pub fn new(levels: Vec<u32>, priors: Vec<f64>, ts: f64, k: usize) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidParameter("alphabet must be nonempty".into()));
        }
        if levels[0] < 1 || levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!(
                "levels must be strictly increasing and at least 1, got {levels:?}"
            )));
        }
        if priors.len() != levels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} priors for {} levels",
                priors.len(),
                levels.len()
            )));
        }
        if priors.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidParameter(format!(
                "priors must lie in [0, 1], got {priors:?}"
            )));
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "priors must sum to 1 within 1e-12, got {total}"
            )));
        }
        if !(ts > 0.0) || !ts.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "symbol duration must be positive, got {ts}"
            )));
        }
        if k < 1 {
            return Err(Error::InvalidParameter("symbol count must be at least 1".into()));
        }
        Ok(ModulationScheme { m: levels.len(), levels, priors, ts, k })
    }

    /// Equiprobable M-ary alphabet with levels L_j = (2j+1) n1 / M, the
    /// spacing that keeps the mean release count equal to n1.
    pub fn uniform_mary(m: usize, n1: u32, ts: f64, k: usize) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidParameter("alphabet size must be at least 1".into()));
        }
        let mut levels = Vec::with_capacity(m);
        for j in 0..m as u32 {
            let numer = (2 * j + 1) as u64 * n1 as u64;
            if numer % m as u64 != 0 {
                return Err(Error::InvalidParameter(format!(
                    "level rule (2j+1)*n1/M is not an integer for j={j}, n1={n1}, M={m}"
                )));
            }
            levels.push((numer / m as u64) as u32);
        }
        let priors = vec![1.0 / m as f64; m];
        ModulationScheme::new(levels, priors, ts, k)
    }

    /// Degenerate single-level alphabet (training sequences).
    pub fn constant(n1: u32, ts: f64, k: usize) -> Result<Self> {
        ModulationScheme::new(vec![n1], vec![1.0], ts, k)
    }

    /// Expected molecules per symbol under the priors.
    pub fn mean_level(&self) -> f64 {
        self.levels
            .iter()
            .zip(&self.priors)
            .map(|(&l, &p)| l as f64 * p)
            .sum()
    }
}

/// Release times for one transmitted frame: molecule i of symbol j is released
/// at (j-1) * Ts on the transmitter clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseSchedule {
    pub symbols: Vec<u32>,
    pub x: Vec<f64>,
}

impl ReleaseSchedule {
    /// Total molecule count N.
    pub fn total_molecules(&self) -> usize {
        self.x.len()
    }

    /// Stable content hash over symbols and release times (FNV-1a), used to
    /// tag precomputed statistics with the schedule that produced them.
    pub fn content_hash(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for &s in &self.symbols {
            eat(&s.to_le_bytes());
        }
        for &x in &self.x {
            eat(&x.to_bits().to_le_bytes());
        }
        h
    }
}

/// Expand symbol counts into the per-molecule release-time vector.
pub fn build_release_schedule(symbols: &[u32], ts: f64) -> Result<ReleaseSchedule> {
    if symbols.is_empty() {
        return Err(Error::InvalidParameter("symbol list must be nonempty".into()));
    }
    if symbols.iter().any(|&n| n == 0) {
        return Err(Error::InvalidParameter(
            "every symbol must release at least one molecule".into(),
        ));
    }
    if !(ts > 0.0) || !ts.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "symbol duration must be positive, got {ts}"
        )));
    }
    let total: usize = symbols.iter().map(|&n| n as usize).sum();
    let mut x = Vec::with_capacity(total);
    for (j, &count) in symbols.iter().enumerate() {
        let release = j as f64 * ts;
        x.extend(std::iter::repeat(release).take(count as usize));
    }
    Ok(ReleaseSchedule { symbols: symbols.to_vec(), x })
}

/// One receiver observation: globally sorted arrival times plus the ground
/// truth that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalObservation {
    pub y: Vec<f64>,
    pub truth_tau: f64,
    pub truth_symbols: Vec<u32>,
}

/// Draw K symbol counts iid from the alphabet.
pub fn generate_symbols<R: Rng + ?Sized>(rng: &mut R, scheme: &ModulationScheme) -> Vec<u32> {
    (0..scheme.k)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (level, &prior) in scheme.levels.iter().zip(&scheme.priors) {
                acc += prior;
                if u < acc {
                    return *level;
                }
            }
            *scheme.levels.last().expect("alphabet is nonempty")
        })
        .collect()
}

/// Simulate one observation: y = sort(x + T) + tau, with T iid hitting times.
/// Ties (a zero-probability event) are broken by a stable sort so repeated
/// runs with the same seed are bit-identical.
pub fn simulate_arrivals<R: Rng + ?Sized>(
    rng: &mut R,
    schedule: &ReleaseSchedule,
    p: &IgParams,
    tau: f64,
) -> ArrivalObservation {
    let mut y: Vec<f64> = schedule.x.iter().map(|&x| x + ig_sample(rng, p)).collect();
    y.sort_by(f64::total_cmp);
    for v in &mut y {
        *v += tau;
    }
    ArrivalObservation { y, truth_tau: tau, truth_symbols: schedule.symbols.clone() }
}

/// Write observations as columnar CSV (trial_id, arrival_index, y); one row
/// per arrival, floats in shortest round-trip form.
pub fn write_observations_csv(path: &Path, observations: &[ArrivalObservation]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    (|| -> std::io::Result<()> {
        writeln!(w, "trial_id,arrival_index,y")?;
        for (trial, obs) in observations.iter().enumerate() {
            for (idx, &y) in obs.y.iter().enumerate() {
                writeln!(w, "{trial},{idx},{y}")?;
            }
        }
        w.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

/// Read back an observations CSV written by [`write_observations_csv`].
/// Ground-truth fields are not stored in the CSV and come back as defaults.
pub fn read_observations_csv(path: &Path) -> Result<Vec<ArrivalObservation>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut trials: Vec<ArrivalObservation> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if lineno == 0 {
            if line != "trial_id,arrival_index,y" {
                return Err(Error::Config(format!(
                    "unexpected observations header: {line}"
                )));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (a, b, c) = (parts.next(), parts.next(), parts.next());
        let (Some(trial), Some(idx), Some(y), None) = (a, b, c, parts.next()) else {
            return Err(Error::Config(format!("malformed observations row: {line}")));
        };
        let trial: usize = trial
            .parse()
            .map_err(|_| Error::Config(format!("bad trial_id in row: {line}")))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| Error::Config(format!("bad arrival_index in row: {line}")))?;
        let y: f64 = y
            .parse()
            .map_err(|_| Error::Config(format!("bad arrival time in row: {line}")))?;
        if trial == trials.len() {
            trials.push(ArrivalObservation { y: Vec::new(), truth_tau: 0.0, truth_symbols: Vec::new() });
        }
        let Some(obs) = trials.get_mut(trial) else {
            return Err(Error::Config(format!("trial ids out of order at row: {line}")));
        };
        if idx != obs.y.len() {
            return Err(Error::Config(format!("arrival indexes out of order at row: {line}")));
        }
        obs.y.push(y);
    }
    Ok(trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ig::IgParams;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn standard() -> IgParams {
        IgParams::new(10.0, 8.1955).unwrap()
    }

    #[test]
    fn release_schedule_expands_counts_to_exact_slot_times() {
        let ts = 30.0;
        let s = build_release_schedule(&[2, 1, 1], ts).unwrap();
        assert_eq!(s.x, vec![0.0, 0.0, ts, 2.0 * ts]);
        assert_eq!(s.total_molecules(), 4);

        assert_eq!(build_release_schedule(&[1], 5.0).unwrap().x, vec![0.0]);
        assert_eq!(build_release_schedule(&[3], 5.0).unwrap().x, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn release_schedule_rejects_degenerate_inputs() {
        assert!(build_release_schedule(&[], 1.0).is_err());
        assert!(build_release_schedule(&[2, 0, 1], 1.0).is_err());
        assert!(build_release_schedule(&[1], 0.0).is_err());
        assert!(build_release_schedule(&[1], f64::NAN).is_err());
    }

    #[test]
    fn scheme_validation_catches_each_invariant() {
        assert!(ModulationScheme::new(vec![], vec![], 1.0, 1).is_err());
        assert!(ModulationScheme::new(vec![0, 2], vec![0.5, 0.5], 1.0, 1).is_err());
        assert!(ModulationScheme::new(vec![4, 4], vec![0.5, 0.5], 1.0, 1).is_err());
        assert!(ModulationScheme::new(vec![4, 2], vec![0.5, 0.5], 1.0, 1).is_err());
        assert!(ModulationScheme::new(vec![4, 12], vec![0.5], 1.0, 1).is_err());
        assert!(ModulationScheme::new(vec![4, 12], vec![0.6, 0.41], 1.0, 1).is_err());
        assert!(ModulationScheme::new(vec![4, 12], vec![-0.1, 1.1], 1.0, 1).is_err());
        assert!(ModulationScheme::new(vec![4, 12], vec![0.5, 0.5], 0.0, 1).is_err());
        assert!(ModulationScheme::new(vec![4, 12], vec![0.5, 0.5], 1.0, 0).is_err());
        assert!(ModulationScheme::new(vec![4, 12], vec![0.5, 0.5], 1.0, 1).is_ok());
    }

    #[test]
    fn mary_level_rule_matches_worked_cases() {
        let s = ModulationScheme::uniform_mary(4, 8, 30.0, 1).unwrap();
        assert_eq!(s.levels, vec![2, 6, 10, 14]);
        assert_eq!(s.priors, vec![0.25; 4]);
        assert_eq!(s.mean_level(), 8.0);

        let s = ModulationScheme::uniform_mary(1, 8, 30.0, 3).unwrap();
        assert_eq!(s.levels, vec![8]);

        let s = ModulationScheme::uniform_mary(8, 8, 30.0, 1).unwrap();
        assert_eq!(s.levels, vec![1, 3, 5, 7, 9, 11, 13, 15]);

        // 3 does not divide (2j+1) * 8 for j = 0.
        assert!(ModulationScheme::uniform_mary(3, 8, 30.0, 1).is_err());
    }

    #[test]
    fn generated_symbols_respect_degenerate_and_uniform_priors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let constant = ModulationScheme::constant(8, 30.0, 5).unwrap();
        assert_eq!(generate_symbols(&mut rng, &constant), vec![8; 5]);

        let binary = ModulationScheme::uniform_mary(2, 8, 30.0, 1).unwrap();
        let draws = 1_000_000usize;
        let mut high = 0usize;
        for _ in 0..draws {
            if generate_symbols(&mut rng, &binary)[0] == 12 {
                high += 1;
            }
        }
        let freq = high as f64 / draws as f64;
        let se = (0.25f64 / draws as f64).sqrt();
        assert!((freq - 0.5).abs() < 3.0 * se, "empirical frequency {freq}");
    }

    #[test]
    fn single_arrival_mean_matches_the_law() {
        let p = standard();
        let schedule = build_release_schedule(&[1], 30.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += simulate_arrivals(&mut rng, &schedule, &p, 0.0).y[0];
        }
        let mean = sum / n as f64;
        let se = p.std_dev() / (n as f64).sqrt();
        assert!((mean - p.mu()).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn offset_shifts_observations_exactly() {
        let p = standard();
        let schedule = build_release_schedule(&[2, 1, 1], 30.0).unwrap();
        let base = simulate_arrivals(&mut ChaCha8Rng::seed_from_u64(9), &schedule, &p, 0.0);
        let shifted = simulate_arrivals(&mut ChaCha8Rng::seed_from_u64(9), &schedule, &p, -5.0);
        for (a, b) in base.y.iter().zip(&shifted.y) {
            assert_eq!(b, &(a - 5.0));
        }
        assert_eq!(shifted.truth_tau, -5.0);
        assert_eq!(shifted.truth_symbols, vec![2, 1, 1]);
    }

    #[test]
    fn arrivals_are_sorted_and_after_the_offset() {
        let p = standard();
        let schedule = build_release_schedule(&[3, 2], 15.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for &tau in &[-7.0, 0.0, 3.5] {
            for _ in 0..200 {
                let obs = simulate_arrivals(&mut rng, &schedule, &p, tau);
                assert!(obs.y.windows(2).all(|w| w[0] <= w[1]));
                assert!(obs.y.iter().all(|&y| y > tau));
            }
        }
    }

    #[test]
    fn relabeling_molecules_within_a_symbol_does_not_change_the_sorted_law() {
        // Two independent streams give statistically equal sorted summaries;
        // the sorted observation depends on the draw multiset, not its order.
        let p = standard();
        let schedule = build_release_schedule(&[4], 30.0).unwrap();
        let n = 200_000usize;
        let mut mean = [[0.0f64; 4]; 2];
        let mut m2 = [[0.0f64; 4]; 2];
        for (s, seed) in [(0usize, 21u64), (1usize, 22u64)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..n {
                let obs = simulate_arrivals(&mut rng, &schedule, &p, 0.0);
                for i in 0..4 {
                    mean[s][i] += obs.y[i];
                    m2[s][i] += obs.y[i] * obs.y[i];
                }
            }
        }
        for i in 0..4 {
            let (a, b) = (mean[0][i] / n as f64, mean[1][i] / n as f64);
            let va = m2[0][i] / n as f64 - a * a;
            let vb = m2[1][i] / n as f64 - b * b;
            let se = ((va + vb) / n as f64).sqrt();
            assert!((a - b).abs() < 4.0 * se, "coordinate {i}: {a} vs {b}");
        }
    }

    #[test]
    fn fourth_order_statistics_match_quadrature_means() {
        use crate::order_stats::{os_moments, OrderStatSpec};
        let p = standard();
        let schedule = build_release_schedule(&[4], 30.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let n = 200_000usize;
        let mut sums = [0.0f64; 4];
        let mut sq = [0.0f64; 4];
        for _ in 0..n {
            let obs = simulate_arrivals(&mut rng, &schedule, &p, 0.0);
            for i in 0..4 {
                sums[i] += obs.y[i];
                sq[i] += obs.y[i] * obs.y[i];
            }
        }
        for i in 0..4 {
            let mean = sums[i] / n as f64;
            let var = sq[i] / n as f64 - mean * mean;
            let spec = OrderStatSpec::new(i + 1, 4, p).unwrap();
            let om = os_moments(&spec).unwrap();
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - om.mean).abs() < 3.0 * se,
                "order stat {}: {mean} vs {} (3se {})",
                i + 1,
                om.mean,
                3.0 * se
            );
        }
    }

    #[test]
    fn observations_round_trip_through_csv() {
        let p = standard();
        let schedule = build_release_schedule(&[2, 1], 30.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let obs: Vec<ArrivalObservation> =
            (0..5).map(|_| simulate_arrivals(&mut rng, &schedule, &p, 1.25)).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("observations.csv");
        write_observations_csv(&path, &obs).unwrap();
        let back = read_observations_csv(&path).unwrap();
        assert_eq!(back.len(), obs.len());
        for (a, b) in obs.iter().zip(&back) {
            assert_eq!(a.y, b.y);
        }
    }

    #[test]
    fn content_hash_distinguishes_schedules() {
        let a = build_release_schedule(&[2, 1], 30.0).unwrap();
        let b = build_release_schedule(&[2, 1], 31.0).unwrap();
        let c = build_release_schedule(&[1, 2], 30.0).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), c.content_hash());
        assert_eq!(a.content_hash(), build_release_schedule(&[2, 1], 30.0).unwrap().content_hash());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn simulated_arrivals_are_always_sorted_and_offset_equivariant(
            seed in 0u64..1_000_000,
            tau in -50.0f64..50.0,
            counts in proptest::collection::vec(1u32..5, 1..5),
        ) {
            let p = standard();
            let schedule = build_release_schedule(&counts, 12.5).unwrap();
            let obs = simulate_arrivals(
                &mut ChaCha8Rng::seed_from_u64(seed), &schedule, &p, tau);
            prop_assert!(obs.y.windows(2).all(|w| w[0] <= w[1]));
            let base = simulate_arrivals(
                &mut ChaCha8Rng::seed_from_u64(seed), &schedule, &p, 0.0);
            for (a, b) in base.y.iter().zip(&obs.y) {
                prop_assert_eq!(a + tau, *b);
            }
        }
    }
}
