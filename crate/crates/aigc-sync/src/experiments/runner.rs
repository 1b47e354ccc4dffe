//! Deterministic Monte Carlo driver: every sweep point simulates one stream
//! of observations and feeds each requested estimator from the same draws,
//! with per-trial substreams so results depend only on the configured seed.

use crate::cache::load_or_compute_stats;
use crate::channel::{
    build_release_schedule, generate_symbols, simulate_arrivals, ModulationScheme,
    ReleaseSchedule,
};
use crate::error::Result;
use crate::estimators::blind::{blind_ule1, blind_v_means, df_estimate, ConfusionMatrix};
use crate::estimators::iule::{iule_estimate, iule_precompute, IuleBlock, IulePrecompute};
use crate::estimators::likelihood::{mle_estimate, MAX_PERMUTATION_ARRIVALS};
use crate::estimators::ule::{ule_estimate, ule_fit, UleWeights};
use crate::experiments::config::{EstimatorKind, ExperimentConfig, PointSetting};
use crate::ig::{crlb, IgParams};
use crate::theory::{blind_ule1_mse, df_mse, ule2_moments, ule2_theoretical_mse, LevelStats};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Seed for training statistics, fixed separately from the experiment seed so
/// the statistics cache stays valid when the trial seed changes.
pub const STATS_SEED: u64 = 0x57A7_5EED;

/// One report row: a (sweep point, estimator) pair with its measured numbers.
/// Numeric fields are absent when the estimator did not run at the point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub point: usize,
    pub sweep: String,
    pub sweep_value: Option<f64>,
    pub estimator: String,
    pub trials: u64,
    pub mse_mc: Option<f64>,
    pub se: Option<f64>,
    pub bias: Option<f64>,
    pub variance: Option<f64>,
    pub mse_theory: Option<f64>,
    pub crlb: Option<f64>,
    pub status: String,
    /// Measured detection matrix, row per transmitted level. Carried in JSON
    /// reports only; the CSV format documents its absence.
    #[serde(skip_serializing_if = "Option::is_none")]
    #[serde(default)]
    pub confusion_q: Option<Vec<Vec<f64>>>,
}

/// A full experiment: the resolved configuration plus one row per
/// (sweep point, estimator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRun {
    pub config: ExperimentConfig,
    pub rows: Vec<PointRow>,
}

/// Streaming moments of the estimation error e = tau_hat - tau.
#[derive(Debug, Clone, Default)]
pub(crate) struct ErrorAccumulator {
    n: u64,
    sum: f64,
    sum2: f64,
    sum4: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct MseSummary {
    pub mse: f64,
    pub se: f64,
    pub bias: f64,
    pub variance: f64,
}

impl ErrorAccumulator {
    pub(crate) fn push(&mut self, e: f64) {
        self.n += 1;
        self.sum += e;
        let e2 = e * e;
        self.sum2 += e2;
        self.sum4 += e2 * e2;
    }

    /// MSE with its standard error (from the spread of the squared errors),
    /// plus the exact bias/variance decomposition of the measured MSE.
    pub(crate) fn finish(&self) -> MseSummary {
        let n = self.n as f64;
        let mse = self.sum2 / n;
        let bias = self.sum / n;
        let variance = (mse - bias * bias).max(0.0);
        let fourth = self.sum4 / n;
        let se = ((fourth - mse * mse).max(0.0) / n).sqrt();
        MseSummary { mse, se, bias, variance }
    }
}

enum Prepared {
    Mle,
    Ule(UleWeights),
    Iule(IulePrecompute),
    Blind { v: Vec<f64> },
    Df { v: Vec<f64>, confusion: Vec<Vec<u64>> },
}

struct Lane {
    kind: EstimatorKind,
    budget: u64,
    prep: Prepared,
    acc: ErrorAccumulator,
}

enum Slot {
    Done(PointRow),
    Lane(usize),
}

enum Preparation {
    Ready(Prepared),
    Incompatible(String),
}

/// Run every sweep point of the experiment. Identical configurations produce
/// identical runs: trials draw from substreams of the configured seed, and
/// training statistics come from the cache under a fixed internal seed.
pub fn run_experiment(cfg: &ExperimentConfig, cache_dir: &Path) -> Result<ExperimentRun> {
    let p = IgParams::new(cfg.mu, cfg.lambda)?;
    let points = cfg.points()?;
    let mut rows = Vec::new();
    for pt in &points {
        run_point(cfg, &p, pt, cache_dir, &mut rows)?;
    }
    Ok(ExperimentRun { config: cfg.clone(), rows })
}

#[allow(clippy::too_many_arguments)]
fn prepare(
    kind: EstimatorKind,
    cfg: &ExperimentConfig,
    p: &IgParams,
    pt: &PointSetting,
    ts: f64,
    scheme: &ModulationScheme,
    n_total: usize,
    cache_dir: &Path,
) -> Result<Preparation> {
    use EstimatorKind::*;
    let single_level = pt.m == 1;
    Ok(match kind {
        Mle => {
            if !single_level {
                Preparation::Incompatible(
                    "maximum likelihood needs a single-level alphabet (m = 1)".into(),
                )
            } else if n_total > MAX_PERMUTATION_ARRIVALS {
                Preparation::Incompatible(format!(
                    "maximum likelihood handles at most {MAX_PERMUTATION_ARRIVALS} arrivals; this point releases {n_total}"
                ))
            } else {
                Preparation::Ready(Prepared::Mle)
            }
        }
        Ule => {
            if !single_level {
                Preparation::Incompatible(
                    "linear estimation trains on a fixed release schedule (m = 1)".into(),
                )
            } else {
                let frame = build_release_schedule(&vec![pt.n1; pt.k], ts)?;
                let (stats, _) =
                    load_or_compute_stats(cache_dir, &frame, ts, p, cfg.stats_trials, STATS_SEED)?;
                Preparation::Ready(Prepared::Ule(ule_fit(&stats, n_total)?))
            }
        }
        Iule => {
            if !single_level {
                Preparation::Incompatible(
                    "iterative linear estimation trains on a fixed release schedule (m = 1)".into(),
                )
            } else {
                let three = build_release_schedule(&[pt.n1; 3], ts)?;
                let one = build_release_schedule(&[pt.n1], ts)?;
                let (s3, _) =
                    load_or_compute_stats(cache_dir, &three, ts, p, cfg.stats_trials, STATS_SEED)?;
                let (s1, _) =
                    load_or_compute_stats(cache_dir, &one, ts, p, cfg.stats_trials, STATS_SEED)?;
                Preparation::Ready(Prepared::Iule(iule_precompute(&s3, &s1, ts, IuleBlock::Second)?))
            }
        }
        BlindUle1 => Preparation::Ready(Prepared::Blind { v: blind_v_means(scheme, p)? }),
        Df => Preparation::Ready(Prepared::Df {
            v: blind_v_means(scheme, p)?,
            confusion: vec![vec![0u64; pt.m]; pt.m],
        }),
    })
}

fn run_point(
    cfg: &ExperimentConfig,
    p: &IgParams,
    pt: &PointSetting,
    cache_dir: &Path,
    rows: &mut Vec<PointRow>,
) -> Result<()> {
    let ts = pt.ts_over_mu * p.mu();
    let scheme = cfg.scheme_for(pt)?;
    let n_total = pt.k * pt.n1 as usize;
    let crlb_value = if pt.m == 1 { Some(crlb(p, n_total)?) } else { None };

    let wants_blind = cfg
        .estimators
        .iter()
        .any(|k| matches!(k, EstimatorKind::BlindUle1 | EstimatorKind::Df));
    if wants_blind && pt.ts_over_mu < 3.0 {
        eprintln!(
            "warning: point {}: symbol spacing {} mu is below 3 mu; interference degrades the first-window assumptions of blind estimation",
            pt.index, pt.ts_over_mu
        );
    }
    let level_stats =
        if wants_blind { Some(LevelStats::for_scheme(&scheme, p)?) } else { None };

    let mut lanes: Vec<Lane> = Vec::new();
    let mut slots: Vec<Slot> = Vec::new();
    for &kind in &cfg.estimators {
        let budget = match kind {
            EstimatorKind::Mle => cfg.mle_trials,
            _ => cfg.trials,
        };
        match prepare(kind, cfg, p, pt, ts, &scheme, n_total, cache_dir)? {
            Preparation::Ready(prep) => {
                slots.push(Slot::Lane(lanes.len()));
                lanes.push(Lane { kind, budget, prep, acc: ErrorAccumulator::default() });
            }
            Preparation::Incompatible(reason) => {
                slots.push(Slot::Done(PointRow {
                    point: pt.index,
                    sweep: cfg.sweep.name().to_string(),
                    sweep_value: pt.sweep_value,
                    estimator: kind.name().to_string(),
                    trials: budget,
                    mse_mc: None,
                    se: None,
                    bias: None,
                    variance: None,
                    mse_theory: None,
                    crlb: None,
                    status: format!("incompatible: {reason}"),
                    confusion_q: None,
                }));
            }
        }
    }

    let fixed_schedule = if scheme.m == 1 {
        Some(build_release_schedule(&vec![pt.n1; pt.k], ts)?)
    } else {
        None
    };
    let max_budget = lanes.iter().map(|l| l.budget).max().unwrap_or(0);
    for t in 0..max_budget {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream((2u64 << 56) | ((pt.index as u64) << 40) | t);
        let fresh_schedule;
        let schedule: &ReleaseSchedule = match &fixed_schedule {
            Some(s) => s,
            None => {
                let symbols = generate_symbols(&mut rng, &scheme);
                fresh_schedule = build_release_schedule(&symbols, ts)?;
                &fresh_schedule
            }
        };
        let obs = simulate_arrivals(&mut rng, schedule, p, cfg.tau_true);
        let first_symbol = schedule.symbols[0];
        for lane in &mut lanes {
            if t >= lane.budget {
                continue;
            }
            let tau_hat = match &mut lane.prep {
                Prepared::Mle => mle_estimate(&obs.y, schedule, p, None)?,
                Prepared::Ule(w) => ule_estimate(w, &obs.y)?,
                Prepared::Iule(pre) => iule_estimate(pre, &obs.y, pt.k)?,
                Prepared::Blind { v } => blind_ule1(obs.y[0], &scheme, v)?,
                Prepared::Df { v, confusion } => {
                    let (tau, det) = df_estimate(&obs.y, &scheme, v)?;
                    let truth = scheme
                        .levels
                        .iter()
                        .position(|&l| l == first_symbol)
                        .expect("transmitted level is in the alphabet");
                    confusion[truth][det.index] += 1;
                    tau
                }
            };
            lane.acc.push(tau_hat - cfg.tau_true);
        }
    }

    let mut lane_rows: Vec<PointRow> = Vec::with_capacity(lanes.len());
    for lane in &lanes {
        let summary = lane.acc.finish();
        let (mse_theory, confusion_q) = match &lane.prep {
            Prepared::Ule(_) if pt.k == 1 && pt.n1 == 2 => {
                (Some(ule2_theoretical_mse(&ule2_moments(p)?)?), None)
            }
            Prepared::Blind { .. } => (
                Some(blind_ule1_mse(level_stats.as_ref().expect("level stats prepared"))),
                None,
            ),
            Prepared::Df { confusion, .. } => match ConfusionMatrix::from_counts(confusion) {
                Ok(q) => {
                    let ls = level_stats.as_ref().expect("level stats prepared");
                    let dim = q.dim();
                    let rows_q: Vec<Vec<f64>> = (0..dim)
                        .map(|i| (0..dim).map(|j| q.q()[(i, j)]).collect())
                        .collect();
                    (Some(df_mse(ls, &q)?), Some(rows_q))
                }
                Err(_) => (None, None),
            },
            _ => (None, None),
        };
        lane_rows.push(PointRow {
            point: pt.index,
            sweep: cfg.sweep.name().to_string(),
            sweep_value: pt.sweep_value,
            estimator: lane.kind.name().to_string(),
            trials: lane.budget,
            mse_mc: Some(summary.mse),
            se: Some(summary.se),
            bias: Some(summary.bias),
            variance: Some(summary.variance),
            mse_theory,
            crlb: crlb_value,
            status: "ok".to_string(),
            confusion_q,
        });
    }
    for slot in slots {
        match slot {
            Slot::Done(row) => rows.push(row),
            Slot::Lane(i) => rows.push(lane_rows[i].clone()),
        }
    }
    Ok(())
}
