//! Experiment configuration: a flat `key = value` file format with comments,
//! strict key checking, and fail-fast validation of every sweep point.

use crate::channel::ModulationScheme;
use crate::error::{Error, Result};
use crate::ig::{derive_ig_params, ChannelParams, BOLTZMANN_K};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Estimators the runner knows how to drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Mle,
    Ule,
    Iule,
    BlindUle1,
    Df,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Mle => "mle",
            EstimatorKind::Ule => "ule",
            EstimatorKind::Iule => "iule",
            EstimatorKind::BlindUle1 => "blind_ule1",
            EstimatorKind::Df => "df",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "mle" => Ok(EstimatorKind::Mle),
            "ule" => Ok(EstimatorKind::Ule),
            "iule" => Ok(EstimatorKind::Iule),
            "blind_ule1" => Ok(EstimatorKind::BlindUle1),
            "df" => Ok(EstimatorKind::Df),
            other => Err(Error::Config(format!(
                "unknown estimator '{other}' (expected mle | ule | iule | blind_ule1 | df)"
            ))),
        }
    }
}

/// Which design variable the sweep points vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    None,
    N1,
    TsOverMu,
    M,
}

impl Sweep {
    pub fn name(&self) -> &'static str {
        match self {
            Sweep::None => "none",
            Sweep::N1 => "n1",
            Sweep::TsOverMu => "ts_over_mu",
            Sweep::M => "m",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Sweep::None),
            "n1" => Ok(Sweep::N1),
            "ts_over_mu" => Ok(Sweep::TsOverMu),
            "m" => Ok(Sweep::M),
            other => Err(Error::Config(format!(
                "unknown sweep '{other}' (expected none | n1 | ts_over_mu | m)"
            ))),
        }
    }
}

/// A fully resolved experiment description. Physical channel parameters given
/// in a file are folded into (mu, lambda) at parse time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub mu: f64,
    pub lambda: f64,
    pub k: usize,
    pub n1: u32,
    pub m: usize,
    pub ts_over_mu: f64,
    pub estimators: Vec<EstimatorKind>,
    pub trials: u64,
    pub mle_trials: u64,
    pub stats_trials: u64,
    pub seed: u64,
    pub tau_true: f64,
    pub sweep: Sweep,
    pub sweep_values: Vec<f64>,
}

/// One sweep point with the design variables it resolves to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSetting {
    pub index: usize,
    pub sweep_value: Option<f64>,
    pub k: usize,
    pub n1: u32,
    pub m: usize,
    pub ts_over_mu: f64,
}

const KNOWN_KEYS: &[&str] = &[
    "name",
    "mu",
    "lambda",
    "temperature",
    "viscosity",
    "molecule_radius",
    "distance",
    "drift",
    "boltzmann_k",
    "k",
    "n1",
    "m",
    "ts_over_mu",
    "estimators",
    "trials",
    "mle_trials",
    "stats_trials",
    "seed",
    "tau_true",
    "sweep",
    "sweep_values",
];

const PHYSICAL_KEYS: &[&str] =
    &["temperature", "viscosity", "molecule_radius", "distance", "drift"];

fn get_f64(map: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<f64>()
            .map(Some)
            .map_err(|_| Error::Config(format!("key '{key}' has non-numeric value '{raw}'"))),
    }
}

fn get_u64(map: &BTreeMap<String, String>, key: &str) -> Result<Option<u64>> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<u64>()
            .map(Some)
            .map_err(|_| {
                Error::Config(format!("key '{key}' needs a nonnegative integer, got '{raw}'"))
            }),
    }
}

fn require<T>(value: Option<T>, key: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::parse_str(&text)
    }

    /// Parse the flat `key = value` format: one assignment per line, `#`
    /// starts a comment line, unknown and duplicate keys are errors, list
    /// values are bare comma-separated tokens.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("line {}: unknown key '{key}'", lineno + 1)));
            }
            if map.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
        }

        let name = require(map.get("name").cloned(), "name")?;
        if name.is_empty() {
            return Err(Error::Config("key 'name' must not be empty".into()));
        }

        let has_law = map.contains_key("mu") || map.contains_key("lambda");
        let has_physical = PHYSICAL_KEYS.iter().any(|k| map.contains_key(*k))
            || map.contains_key("boltzmann_k");
        let (mu, lambda) = match (has_law, has_physical) {
            (true, true) => {
                return Err(Error::Config(
                    "give either mu/lambda or the physical channel parameters, not both".into(),
                ));
            }
            (true, false) => {
                let mu = require(get_f64(&map, "mu")?, "mu")?;
                let lambda = require(get_f64(&map, "lambda")?, "lambda")?;
                (mu, lambda)
            }
            (false, true) => {
                let cp = ChannelParams::new(
                    get_f64(&map, "boltzmann_k")?.unwrap_or(BOLTZMANN_K),
                    require(get_f64(&map, "temperature")?, "temperature")?,
                    require(get_f64(&map, "viscosity")?, "viscosity")?,
                    require(get_f64(&map, "molecule_radius")?, "molecule_radius")?,
                    require(get_f64(&map, "distance")?, "distance")?,
                    require(get_f64(&map, "drift")?, "drift")?,
                )?;
                let p = derive_ig_params(&cp)?;
                (p.mu(), p.lambda())
            }
            (false, false) => {
                return Err(Error::Config(
                    "missing channel description: give mu/lambda or the physical parameters".into(),
                ));
            }
        };

        let estimators_raw = require(map.get("estimators").cloned(), "estimators")?;
        let mut estimators = Vec::new();
        for token in estimators_raw.split(',') {
            let kind = EstimatorKind::parse(token.trim())?;
            if estimators.contains(&kind) {
                return Err(Error::Config(format!(
                    "estimator '{}' listed more than once",
                    kind.name()
                )));
            }
            estimators.push(kind);
        }

        let sweep = match map.get("sweep") {
            Some(raw) => Sweep::parse(raw.trim())?,
            None => Sweep::None,
        };
        let sweep_values = match map.get("sweep_values") {
            None => Vec::new(),
            Some(raw) => raw
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|_| {
                        Error::Config(format!("sweep value '{}' is not numeric", tok.trim()))
                    })
                })
                .collect::<Result<Vec<f64>>>()?,
        };

        let cfg = ExperimentConfig {
            name,
            mu,
            lambda,
            k: get_u64(&map, "k")?.unwrap_or(1) as usize,
            n1: require(get_u64(&map, "n1")?, "n1")? as u32,
            m: get_u64(&map, "m")?.unwrap_or(1) as usize,
            ts_over_mu: require(get_f64(&map, "ts_over_mu")?, "ts_over_mu")?,
            estimators,
            trials: get_u64(&map, "trials")?.unwrap_or(100_000),
            mle_trials: get_u64(&map, "mle_trials")?.unwrap_or(10_000),
            stats_trials: get_u64(&map, "stats_trials")?.unwrap_or(10_000_000),
            seed: require(get_u64(&map, "seed")?, "seed")?,
            tau_true: get_f64(&map, "tau_true")?.unwrap_or(0.0),
            sweep,
            sweep_values,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !(self.lambda > 0.0) {
            return Err(Error::Config(format!(
                "law parameters must be positive, got mu = {}, lambda = {}",
                self.mu, self.lambda
            )));
        }
        if self.k < 1 || self.n1 < 1 || self.m < 1 {
            return Err(Error::Config(format!(
                "k, n1 and m must be at least 1, got k = {}, n1 = {}, m = {}",
                self.k, self.n1, self.m
            )));
        }
        if !(self.ts_over_mu > 0.0) || !self.ts_over_mu.is_finite() {
            return Err(Error::Config(format!(
                "ts_over_mu must be positive, got {}",
                self.ts_over_mu
            )));
        }
        if !self.tau_true.is_finite() {
            return Err(Error::Config(format!("tau_true must be finite, got {}", self.tau_true)));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("at least one estimator is required".into()));
        }
        if self.trials < 1_000 {
            return Err(Error::Config(format!(
                "trials must be at least 1000, got {}",
                self.trials
            )));
        }
        if self.mle_trials < 1_000 {
            return Err(Error::Config(format!(
                "mle_trials must be at least 1000, got {}",
                self.mle_trials
            )));
        }
        if self.stats_trials < 100_000 {
            return Err(Error::Config(format!(
                "stats_trials must be at least 100000, got {}",
                self.stats_trials
            )));
        }
        match self.sweep {
            Sweep::None => {
                if !self.sweep_values.is_empty() {
                    return Err(Error::Config(
                        "sweep_values given but sweep is 'none'".into(),
                    ));
                }
            }
            _ => {
                if self.sweep_values.is_empty() {
                    return Err(Error::Config(format!(
                        "sweep '{}' needs nonempty sweep_values",
                        self.sweep.name()
                    )));
                }
            }
        }
        // Every point must be constructible before any trials run.
        self.points()?;
        Ok(())
    }

    /// Resolve the sweep into concrete per-point settings, validating each.
    pub fn points(&self) -> Result<Vec<PointSetting>> {
        let base = PointSetting {
            index: 0,
            sweep_value: None,
            k: self.k,
            n1: self.n1,
            m: self.m,
            ts_over_mu: self.ts_over_mu,
        };
        let mut points = Vec::new();
        match self.sweep {
            Sweep::None => points.push(base),
            Sweep::N1 => {
                for (index, &v) in self.sweep_values.iter().enumerate() {
                    let n1 = positive_integer(v, "n1")? as u32;
                    points.push(PointSetting { index, sweep_value: Some(v), n1, ..base });
                }
            }
            Sweep::TsOverMu => {
                for (index, &v) in self.sweep_values.iter().enumerate() {
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(Error::Config(format!(
                            "ts_over_mu sweep value must be positive, got {v}"
                        )));
                    }
                    points.push(PointSetting { index, sweep_value: Some(v), ts_over_mu: v, ..base });
                }
            }
            Sweep::M => {
                for (index, &v) in self.sweep_values.iter().enumerate() {
                    let m = positive_integer(v, "m")?;
                    points.push(PointSetting { index, sweep_value: Some(v), m, ..base });
                }
            }
        }
        for pt in &points {
            self.scheme_for(pt).map_err(|e| {
                Error::Config(format!("sweep point {} is not constructible: {e}", pt.index))
            })?;
        }
        Ok(points)
    }

    /// Alphabet for one point: degenerate single level when m is 1, otherwise
    /// the equiprobable spread around n1.
    pub fn scheme_for(&self, pt: &PointSetting) -> Result<ModulationScheme> {
        let ts = pt.ts_over_mu * self.mu;
        if pt.m == 1 {
            ModulationScheme::constant(pt.n1, ts, pt.k)
        } else {
            ModulationScheme::uniform_mary(pt.m, pt.n1, ts, pt.k)
        }
    }
}

fn positive_integer(v: f64, what: &str) -> Result<usize> {
    if !(v >= 1.0) || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(Error::Config(format!(
            "{what} sweep value must be a positive integer, got {v}"
        )));
    }
    Ok(v as usize)
}
