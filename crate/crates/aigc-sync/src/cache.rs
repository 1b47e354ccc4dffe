//! Versioned on-disk cache for sorted-arrival training statistics, keyed by
//! every input that affects them. A cache entry is used only when all stored
//! inputs match the request bit for bit; anything else is recomputed and the
//! entry rewritten.

use crate::channel::ReleaseSchedule;
use crate::error::{Error, Result};
use crate::ig::IgParams;
use crate::order_stats::{sorted_arrival_stats, SortedArrivalStats};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const CACHE_VERSION: u32 = 1;

/// Whether a lookup was served from disk or computed fresh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOutcome {
    Hit,
    Computed,
}

#[derive(Debug, Serialize, Deserialize)]
struct StatsCacheFile {
    version: u32,
    mu: f64,
    lambda: f64,
    symbols: Vec<u32>,
    ts: f64,
    x: Vec<f64>,
    trials: u64,
    seed: u64,
    u: Vec<f64>,
    c_row_major: Vec<f64>,
}

fn fnv1a(h: &mut u64, bytes: &[u8]) {
    for &b in bytes {
        *h ^= b as u64;
        *h = h.wrapping_mul(0x100000001b3);
    }
}

/// File a given request maps to inside the cache directory.
pub fn stats_cache_path(
    dir: &Path,
    schedule: &ReleaseSchedule,
    ts: f64,
    p: &IgParams,
    trials: u64,
    seed: u64,
) -> PathBuf {
    let mut h = 0xcbf29ce484222325u64;
    fnv1a(&mut h, &CACHE_VERSION.to_le_bytes());
    fnv1a(&mut h, &p.mu().to_bits().to_le_bytes());
    fnv1a(&mut h, &p.lambda().to_bits().to_le_bytes());
    for &s in &schedule.symbols {
        fnv1a(&mut h, &s.to_le_bytes());
    }
    fnv1a(&mut h, &ts.to_bits().to_le_bytes());
    for &x in &schedule.x {
        fnv1a(&mut h, &x.to_bits().to_le_bytes());
    }
    fnv1a(&mut h, &trials.to_le_bytes());
    fnv1a(&mut h, &seed.to_le_bytes());
    dir.join(format!("stats-{h:016x}.json"))
}

/// Directory used when the caller does not choose one: the
/// `AIGC_SYNC_CACHE_DIR` environment variable, or a fixed location under the
/// system temporary directory.
pub fn default_cache_dir() -> PathBuf {
    match std::env::var_os("AIGC_SYNC_CACHE_DIR") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => std::env::temp_dir().join("aigc-sync-cache"),
    }
}

fn try_load(
    path: &Path,
    schedule: &ReleaseSchedule,
    ts: f64,
    p: &IgParams,
    trials: u64,
    seed: u64,
) -> Option<SortedArrivalStats> {
    let text = std::fs::read_to_string(path).ok()?;
    let file: StatsCacheFile = serde_json::from_str(&text).ok()?;
    let n = schedule.x.len();
    let matches = file.version == CACHE_VERSION
        && file.mu.to_bits() == p.mu().to_bits()
        && file.lambda.to_bits() == p.lambda().to_bits()
        && file.symbols == schedule.symbols
        && file.ts.to_bits() == ts.to_bits()
        && file.x.len() == n
        && file
            .x
            .iter()
            .zip(&schedule.x)
            .all(|(a, b)| a.to_bits() == b.to_bits())
        && file.trials == trials
        && file.seed == seed
        && file.u.len() == n
        && file.c_row_major.len() == n * n
        && file.u.iter().all(|v| v.is_finite())
        && file.c_row_major.iter().all(|v| v.is_finite());
    if !matches {
        return None;
    }
    Some(SortedArrivalStats {
        u: DVector::from_vec(file.u),
        c: DMatrix::from_row_slice(n, n, &file.c_row_major),
        schedule_hash: schedule.content_hash(),
        mc_trials: trials,
    })
}

fn store(
    dir: &Path,
    path: &Path,
    schedule: &ReleaseSchedule,
    ts: f64,
    p: &IgParams,
    trials: u64,
    seed: u64,
    stats: &SortedArrivalStats,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = schedule.x.len();
    let mut c_row_major = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            c_row_major.push(stats.c[(r, c)]);
        }
    }
    let file = StatsCacheFile {
        version: CACHE_VERSION,
        mu: p.mu(),
        lambda: p.lambda(),
        symbols: schedule.symbols.clone(),
        ts,
        x: schedule.x.clone(),
        trials,
        seed,
        u: stats.u.iter().copied().collect(),
        c_row_major,
    };
    let text = serde_json::to_string(&file)
        .map_err(|e| Error::Config(format!("could not encode cache entry: {e}")))?;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Fetch the sorted-arrival statistics for the request, computing and
/// persisting them when no valid entry exists.
pub fn load_or_compute_stats(
    dir: &Path,
    schedule: &ReleaseSchedule,
    ts: f64,
    p: &IgParams,
    trials: u64,
    seed: u64,
) -> Result<(SortedArrivalStats, CacheOutcome)> {
    let path = stats_cache_path(dir, schedule, ts, p, trials, seed);
    if let Some(stats) = try_load(&path, schedule, ts, p, trials, seed) {
        return Ok((stats, CacheOutcome::Hit));
    }
    let stats = sorted_arrival_stats(schedule, p, trials, seed)?;
    store(dir, &path, schedule, ts, p, trials, seed, &stats)?;
    Ok((stats, CacheOutcome::Computed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::build_release_schedule;

    fn standard() -> IgParams {
        IgParams::new(10.0, 8.1955).unwrap()
    }

    fn tamper(path: &Path, edit: impl FnOnce(&mut serde_json::Value)) {
        let text = std::fs::read_to_string(path).unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        edit(&mut value);
        std::fs::write(path, serde_json::to_string(&value).unwrap()).unwrap();
    }

    #[test]
    fn matching_entries_are_served_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let p = standard();
        let schedule = build_release_schedule(&[2], 30.0).unwrap();
        let (a, out) = load_or_compute_stats(dir.path(), &schedule, 30.0, &p, 10_000, 1).unwrap();
        assert_eq!(out, CacheOutcome::Computed);

        // Prove the second call reads the file: plant a sentinel value in it.
        let path = stats_cache_path(dir.path(), &schedule, 30.0, &p, 10_000, 1);
        tamper(&path, |v| v["u"][0] = serde_json::json!(a.u[0] + 1.0));
        let (b, out) = load_or_compute_stats(dir.path(), &schedule, 30.0, &p, 10_000, 1).unwrap();
        assert_eq!(out, CacheOutcome::Hit);
        assert_eq!(b.u[0], a.u[0] + 1.0);
    }

    #[test]
    fn any_input_field_mismatch_invalidates_the_entry() {
        let dir = tempfile::tempdir().unwrap();
        let p = standard();
        let schedule = build_release_schedule(&[2], 30.0).unwrap();
        let (a, _) = load_or_compute_stats(dir.path(), &schedule, 30.0, &p, 10_000, 1).unwrap();
        let path = stats_cache_path(dir.path(), &schedule, 30.0, &p, 10_000, 1);

        for field in ["version", "mu", "lambda", "ts", "trials", "seed"] {
            tamper(&path, |v| {
                v["u"][0] = serde_json::json!(a.u[0] + 1.0);
                v[field] = serde_json::json!(999);
            });
            let (b, out) =
                load_or_compute_stats(dir.path(), &schedule, 30.0, &p, 10_000, 1).unwrap();
            assert_eq!(out, CacheOutcome::Computed, "field {field}");
            assert_eq!(b.u[0], a.u[0], "field {field}");
        }
    }

    #[test]
    fn corrupt_entries_are_recomputed_not_propagated() {
        let dir = tempfile::tempdir().unwrap();
        let p = standard();
        let schedule = build_release_schedule(&[1], 30.0).unwrap();
        let (a, _) = load_or_compute_stats(dir.path(), &schedule, 30.0, &p, 10_000, 2).unwrap();
        let path = stats_cache_path(dir.path(), &schedule, 30.0, &p, 10_000, 2);
        std::fs::write(&path, b"not json at all {{{").unwrap();
        let (b, out) = load_or_compute_stats(dir.path(), &schedule, 30.0, &p, 10_000, 2).unwrap();
        assert_eq!(out, CacheOutcome::Computed);
        assert_eq!(a.u, b.u);
        assert_eq!(a.c, b.c);
    }

    #[test]
    fn distinct_requests_get_distinct_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = standard();
        let schedule = build_release_schedule(&[2], 30.0).unwrap();
        let base = stats_cache_path(dir.path(), &schedule, 30.0, &p, 10_000, 1);
        assert_ne!(base, stats_cache_path(dir.path(), &schedule, 30.0, &p, 10_000, 2));
        assert_ne!(base, stats_cache_path(dir.path(), &schedule, 30.0, &p, 20_000, 1));
        assert_ne!(base, stats_cache_path(dir.path(), &schedule, 31.0, &p, 10_000, 1));
        let other = build_release_schedule(&[1, 1], 30.0).unwrap();
        assert_ne!(base, stats_cache_path(dir.path(), &other, 30.0, &p, 10_000, 1));
    }

    #[test]
    fn cache_dir_override_comes_from_the_environment() {
        let key = "AIGC_SYNC_CACHE_DIR";
        let prior = std::env::var_os(key);
        std::env::set_var(key, "/some/override");
        assert_eq!(default_cache_dir(), PathBuf::from("/some/override"));
        std::env::remove_var(key);
        assert_eq!(
            default_cache_dir(),
            std::env::temp_dir().join("aigc-sync-cache")
        );
        if let Some(v) = prior {
            std::env::set_var(key, v);
        }
    }
}
