//! Command-line front end: `simulate` runs the Monte Carlo experiment in a
//! config file, `precompute` warms the training-statistics cache, and
//! `theory` prints closed-form predictions without simulating.

use aigc_sync::cache::{default_cache_dir, load_or_compute_stats, stats_cache_path, CacheOutcome};
use aigc_sync::channel::build_release_schedule;
use aigc_sync::error::{Error, Result};
use aigc_sync::experiments::config::{EstimatorKind, ExperimentConfig};
use aigc_sync::experiments::report::{emit_report, ReportFormat};
use aigc_sync::experiments::runner::{run_experiment, ExperimentRun, PointRow, STATS_SEED};
use aigc_sync::ig::{crlb, IgParams};
use aigc_sync::theory::{
    blind_ule1_mse, decision_directed_floor, ule2_moments, ule2_theoretical_mse, LevelStats,
};
use clap::{Parser, Subcommand, ValueEnum};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "aigc-sync",
    version,
    about = "Timing-offset estimation experiments for diffusion-based molecular channels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(value: FormatArg) -> Self {
        match value {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo experiment described by a config file.
    Simulate {
        /// Path to a key = value config file.
        config: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report format.
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        /// Override the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the per-point trial budget in the config file.
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Compute and cache the training statistics the config needs.
    Precompute {
        /// Path to a key = value config file.
        config: PathBuf,
    },
    /// Emit closed-form performance predictions without simulating.
    Theory {
        /// Path to a key = value config file.
        config: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report format.
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
    },
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
    ExperimentConfig::parse_str(&text)
}

fn simulate(
    config: &Path,
    out: Option<&Path>,
    format: ReportFormat,
    seed: Option<u64>,
    trials: Option<u64>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(trials) = trials {
        cfg.trials = trials;
        cfg.validate()?;
    }
    let run = run_experiment(&cfg, &default_cache_dir())?;
    emit_report(&run, format, out)
}

fn precompute(config: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let p = IgParams::new(cfg.mu, cfg.lambda)?;
    let cache_dir = default_cache_dir();
    let wants_ule = cfg.estimators.contains(&EstimatorKind::Ule);
    let wants_iule = cfg.estimators.contains(&EstimatorKind::Iule);
    let mut frames: BTreeSet<(u32, usize, u64)> = BTreeSet::new();
    for pt in cfg.points()? {
        if pt.m != 1 {
            continue;
        }
        if wants_ule {
            frames.insert((pt.n1, pt.k, pt.ts_over_mu.to_bits()));
        }
        if wants_iule {
            frames.insert((pt.n1, 3, pt.ts_over_mu.to_bits()));
            frames.insert((pt.n1, 1, pt.ts_over_mu.to_bits()));
        }
    }
    if frames.is_empty() {
        println!("no training statistics required");
        return Ok(());
    }
    for (n1, k, ts_bits) in frames {
        let ts = f64::from_bits(ts_bits) * p.mu();
        let schedule = build_release_schedule(&vec![n1; k], ts)?;
        let path =
            stats_cache_path(&cache_dir, &schedule, ts, &p, cfg.stats_trials, STATS_SEED);
        let (_, outcome) =
            load_or_compute_stats(&cache_dir, &schedule, ts, &p, cfg.stats_trials, STATS_SEED)?;
        let label = match outcome {
            CacheOutcome::Hit => "hit",
            CacheOutcome::Computed => "computed",
        };
        println!("{} {}", path.display(), label);
    }
    Ok(())
}

fn theory(config: &Path, out: Option<&Path>, format: ReportFormat) -> Result<()> {
    let cfg = load_config(config)?;
    let p = IgParams::new(cfg.mu, cfg.lambda)?;
    let mut rows = Vec::new();
    for pt in cfg.points()? {
        let scheme = cfg.scheme_for(&pt)?;
        let n_total = pt.k * pt.n1 as usize;
        let crlb_value = if pt.m == 1 { Some(crlb(&p, n_total)?) } else { None };
        let wants_blind = cfg
            .estimators
            .iter()
            .any(|k| matches!(k, EstimatorKind::BlindUle1 | EstimatorKind::Df));
        let level_stats =
            if wants_blind { Some(LevelStats::for_scheme(&scheme, &p)?) } else { None };
        for &kind in &cfg.estimators {
            let mse_theory = match kind {
                EstimatorKind::Ule if pt.m == 1 && pt.k == 1 && pt.n1 == 2 => {
                    Some(ule2_theoretical_mse(&ule2_moments(&p)?)?)
                }
                EstimatorKind::BlindUle1 => {
                    Some(blind_ule1_mse(level_stats.as_ref().expect("level stats prepared")))
                }
                // Perfect-detection floor: the reachable limit for feedback.
                EstimatorKind::Df => Some(decision_directed_floor(
                    level_stats.as_ref().expect("level stats prepared"),
                )),
                _ => None,
            };
            rows.push(PointRow {
                point: pt.index,
                sweep: cfg.sweep.name().to_string(),
                sweep_value: pt.sweep_value,
                estimator: kind.name().to_string(),
                trials: 0,
                mse_mc: None,
                se: None,
                bias: None,
                variance: None,
                mse_theory,
                crlb: crlb_value,
                status: "theory".to_string(),
                confusion_q: None,
            });
        }
    }
    let run = ExperimentRun { config: cfg, rows };
    emit_report(&run, format, out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, format, seed, trials } => {
            simulate(&config, out.as_deref(), format.into(), seed, trials)
        }
        Command::Precompute { config } => precompute(&config),
        Command::Theory { config, out, format } => {
            theory(&config, out.as_deref(), format.into())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        let payload = serde_json::json!({
            "error": { "code": err.code(), "message": err.to_string() }
        });
        eprintln!("{payload}");
        std::process::exit(1);
    }
}
