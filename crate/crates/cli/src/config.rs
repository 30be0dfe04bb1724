//! Flat `key = value` configuration files.
//!
//! Lines are `key = value`; `#` starts a comment. Command-line flags are
//! applied after the file through the same [`AnalysisConfig::set`] path, so
//! flags win.

use std::path::Path;

use decorrel::correlation::DEFAULT_M_MC;
use decorrel::models::{ModelId, ModelSpec};
use decorrel::study::{BandwidthRule, StudyConfig};
use decorrel::{CorrelationMeasure, NoiseSpec};
use serde::Serialize;

use crate::dataset::{Column, IngestOptions};
use crate::error::{CliError, CliResult};

/// Environment variable consulted for the seed when no flag or config key sets it.
pub const SEED_ENV: &str = "DECORREL_SEED";

/// `(line number, key, value)` triples in file order.
pub fn parse_kv(text: &str) -> CliResult<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_kv_file(path: &Path) -> CliResult<Vec<(usize, String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_kv(&text)
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> CliResult<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Usage(format!("invalid value {value:?} for {key}"))),
    }
}

fn parse_list(key: &str, value: &str) -> CliResult<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthChoice {
    Fixed(f64),
    /// Successive-difference selection on the data.
    Auto,
    /// Selection on Gaussian mock datasets fitted to the data.
    Mock,
}

impl std::str::FromStr for BandwidthChoice {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "auto" => Ok(BandwidthChoice::Auto),
            "mock" | "mock-auto" => Ok(BandwidthChoice::Mock),
            other => match other.parse::<f64>() {
                Ok(h) if h > 0.0 && h.is_finite() => Ok(BandwidthChoice::Fixed(h)),
                _ => Err(CliError::Usage(format!(
                    "bandwidth must be auto, mock or a positive number, got {other:?}"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Laplace,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisConfig {
    pub noise: NoiseKind,
    pub noise_v1: Option<f64>,
    pub noise_v2: Option<f64>,
    pub measure: CorrelationMeasure,
    pub alpha: f64,
    pub deltas: Vec<f64>,
    #[serde(rename = "B")]
    pub b: usize,
    pub m_mc: usize,
    pub nx: usize,
    pub ny: usize,
    pub bandwidth: BandwidthChoice,
    pub bandwidth_scale: f64,
    pub seed: Option<u64>,
    pub x_column: String,
    pub y_column: String,
    pub header: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            noise: NoiseKind::Laplace,
            noise_v1: None,
            noise_v2: None,
            measure: CorrelationMeasure::KendallTau,
            alpha: 0.05,
            deltas: Vec::new(),
            b: decorrel::bootstrap::DEFAULT_B,
            m_mc: DEFAULT_M_MC,
            nx: 512,
            ny: 512,
            bandwidth: BandwidthChoice::Auto,
            bandwidth_scale: 1.0,
            seed: None,
            x_column: "0".into(),
            y_column: "1".into(),
            header: true,
        }
    }
}

impl AnalysisConfig {
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        match key {
            "noise" => {
                self.noise = match value {
                    "laplace" => NoiseKind::Laplace,
                    "none" => NoiseKind::None,
                    _ => return Err(CliError::Usage(format!("noise must be laplace or none, got {value:?}"))),
                }
            }
            "noise_v1" => self.noise_v1 = Some(parse(key, value)?),
            "noise_v2" => self.noise_v2 = Some(parse(key, value)?),
            "measure" => {
                self.measure = value
                    .parse()
                    .map_err(|e: decorrel::Error| CliError::Usage(e.to_string()))?
            }
            "alpha" => self.alpha = parse(key, value)?,
            "deltas" => self.deltas = parse_list(key, value)?,
            "B" | "b" => self.b = parse(key, value)?,
            "m_mc" => self.m_mc = parse(key, value)?,
            "grid" => {
                self.nx = parse(key, value)?;
                self.ny = self.nx;
            }
            "nx" => self.nx = parse(key, value)?,
            "ny" => self.ny = parse(key, value)?,
            "bandwidth" => self.bandwidth = value.parse()?,
            "bandwidth_scale" => self.bandwidth_scale = parse_scale(value)?,
            "seed" => self.seed = Some(parse(key, value)?),
            "x_column" => self.x_column = value.to_string(),
            "y_column" => self.y_column = value.to_string(),
            "header" => self.header = parse_bool(key, value)?,
            _ => return Err(CliError::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn apply(&mut self, entries: &[(usize, String, String)]) -> CliResult<()> {
        for (line, k, v) in entries {
            self.set(k, v).map_err(|e| match e {
                CliError::Usage(m) if *line > 0 => CliError::Usage(format!("config line {line}: {m}")),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn noise_spec(&self) -> CliResult<NoiseSpec> {
        match self.noise {
            NoiseKind::None => Ok(NoiseSpec::none()),
            NoiseKind::Laplace => match (self.noise_v1, self.noise_v2) {
                (Some(a), Some(b)) => Ok(NoiseSpec::laplace(a, b)?),
                _ => Err(CliError::Usage(
                    "Laplace noise needs both noise_v1 and noise_v2 (or set noise = none)".into(),
                )),
            },
        }
    }

    pub fn ingest_options(&self) -> IngestOptions {
        IngestOptions {
            x: self.x_column.parse::<Column>().expect("infallible"),
            y: self.y_column.parse::<Column>().expect("infallible"),
            has_header: self.header,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.noise_spec()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.deltas.iter().any(|d| d.is_nan() || *d < 0.0) || !self.deltas.windows(2).all(|w| w[0] <= w[1]) {
            return Err(CliError::Usage("deltas must be non-negative and ascending".into()));
        }
        if self.b < 2 || self.m_mc == 0 {
            return Err(CliError::Usage("need B >= 2 and m_mc >= 1".into()));
        }
        Ok(())
    }
}

fn parse_scale(value: &str) -> CliResult<f64> {
    // accepts plain numbers and fractions such as 2/3
    let v = match value.split_once('/') {
        Some((a, b)) => parse::<f64>("bandwidth_scale", a.trim())? / parse::<f64>("bandwidth_scale", b.trim())?,
        None => parse("bandwidth_scale", value)?,
    };
    if !(v > 0.0 && v.is_finite()) {
        return Err(CliError::Usage(format!(
            "bandwidth_scale must be positive, got {value:?}"
        )));
    }
    Ok(v)
}

/// `--seed` flag, then the config value, then `DECORREL_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>, env: Option<&str>) -> CliResult<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        None => Ok(0),
    }
}

/// Study description for the `simulate` command.
pub fn study_from_kv(entries: &[(usize, String, String)]) -> CliResult<StudyConfig> {
    let mut model = 1u32;
    let mut sigma = None;
    let mut n = None;
    let mut measure = CorrelationMeasure::KendallTau;
    let mut delta = None;
    let mut rest: Vec<(usize, &str, &str)> = Vec::new();
    for (line, k, v) in entries {
        let at = |e: CliError| match e {
            CliError::Usage(m) => CliError::Usage(format!("study line {line}: {m}")),
            other => other,
        };
        match k.as_str() {
            "model" => model = parse(k, v).map_err(at)?,
            "sigma" => sigma = Some(parse::<f64>(k, v).map_err(at)?),
            "n" => n = Some(parse::<usize>(k, v).map_err(at)?),
            "measure" => {
                measure = v
                    .parse()
                    .map_err(|e: decorrel::Error| at(CliError::Usage(e.to_string())))?
            }
            "delta" => delta = Some(parse::<f64>(k, v).map_err(at)?),
            _ => rest.push((*line, k, v)),
        }
    }
    let need = |name: &str| CliError::Usage(format!("study config is missing {name}"));
    let spec = ModelSpec::new(
        ModelId::from_number(model)?,
        sigma.ok_or_else(|| need("sigma"))?,
        n.ok_or_else(|| need("n"))?,
    )?;
    let mut cfg = StudyConfig::new(spec, measure, delta.ok_or_else(|| need("delta"))?);
    for (line, k, v) in rest {
        let at = |e: CliError| match e {
            CliError::Usage(m) => CliError::Usage(format!("study line {line}: {m}")),
            other => other,
        };
        match k {
            "alpha" => cfg.alpha = parse(k, v).map_err(at)?,
            "reps" => cfg.reps = parse(k, v).map_err(at)?,
            "B" | "b" => cfg.b = parse(k, v).map_err(at)?,
            "m_mc" => cfg.m_mc = parse(k, v).map_err(at)?,
            "master_seed" | "seed" => cfg.master_seed = parse(k, v).map_err(at)?,
            "bandwidth" => cfg.bandwidth = parse_rule(v).map_err(at)?,
            _ => return Err(at(CliError::Usage(format!("unknown study key {k:?}")))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `auto`, `fixed:<h>` (or a bare number) and `scaled:<factor>`.
pub fn parse_rule(v: &str) -> CliResult<BandwidthRule> {
    let rule = match v.split_once(':') {
        None if v == "auto" => BandwidthRule::Auto,
        None => BandwidthRule::Fixed(parse("bandwidth", v)?),
        Some(("fixed", h)) => BandwidthRule::Fixed(parse("bandwidth", h.trim())?),
        Some(("scaled", f)) => BandwidthRule::Scaled(parse("bandwidth", f.trim())?),
        Some(_) => return Err(CliError::Usage(format!("unknown bandwidth rule {v:?}"))),
    };
    Ok(rule)
}
