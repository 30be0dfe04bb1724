//! Simulation studies on the bundled models.
//!
//! Dataset `i` of a study draws everything from `SeedStream::new(master_seed).child(i)`:
//! its data from `.child(0)` and its bootstrap from the key of `.child(2)`.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{default_ladder, ladder_grid, select_bandwidth};
use crate::bootstrap::{bootstrap, confidence_interval, relevant_test, RateFactor};
use crate::correlation::{spearman_rho, CorrelationMeasure, PipelineParams, DEFAULT_M_MC};
use crate::deconv::{default_grid, BandwidthPair};
use crate::error::{Error, Result};
use crate::kernel::FlatTopKernel;
use crate::models::{true_correlation, Covariance, ModelSpec};
use crate::noise::NoiseSpec;
use crate::rng::SeedStream;
use crate::Point;

/// How each dataset in a study gets its bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    Fixed(f64),
    /// Successive-difference selection on the default ladder.
    Auto,
    /// `factor` times the automatically selected bandwidth.
    Scaled(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub model: ModelSpec,
    pub measure: CorrelationMeasure,
    pub delta: f64,
    pub alpha: f64,
    pub reps: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub m_mc: usize,
    pub master_seed: u64,
    pub bandwidth: BandwidthRule,
}

impl StudyConfig {
    /// Desk-scale defaults: 100 datasets, 100 replicates, automatic bandwidth.
    pub fn new(model: ModelSpec, measure: CorrelationMeasure, delta: f64) -> Self {
        Self {
            model,
            measure,
            delta,
            alpha: 0.05,
            reps: 100,
            b: 100,
            m_mc: DEFAULT_M_MC,
            master_seed: 0,
            bandwidth: BandwidthRule::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.latent()?;
        if self.reps == 0 || self.b < 2 || self.m_mc == 0 {
            return Err(Error::InvalidParameter(format!(
                "study needs reps >= 1, B >= 2 and m_mc >= 1 (got {}, {}, {})",
                self.reps, self.b, self.m_mc
            )));
        }
        if !(self.delta >= 0.0) || !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "need delta >= 0 and alpha in (0, 1) (got {}, {})",
                self.delta, self.alpha
            )));
        }
        match self.bandwidth {
            BandwidthRule::Fixed(v) | BandwidthRule::Scaled(v) if !(v > 0.0 && v.is_finite()) => Err(
                Error::InvalidParameter(format!("bandwidth value must be positive, got {v}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Per-dataset result of a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetOutcome {
    pub theta_hat: f64,
    pub h: f64,
    pub reject: bool,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFailure {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub truth: f64,
    pub completed: usize,
    pub rejections: usize,
    pub covered: usize,
    pub rejection_rate: f64,
    pub ci_coverage: f64,
    pub mean_theta: f64,
    pub bandwidths_used: Vec<f64>,
    pub theta_hats: Vec<f64>,
    pub failures: Vec<DatasetFailure>,
}

impl StudyReport {
    /// Median of the bandwidths used (lower median for an even count).
    pub fn median_bandwidth(&self) -> f64 {
        let mut v = self.bandwidths_used.clone();
        if v.is_empty() {
            return f64::NAN;
        }
        v.sort_by(f64::total_cmp);
        v[(v.len() - 1) / 2]
    }
}

/// Bandwidth for one dataset under `rule`.
pub fn dataset_bandwidth(
    z: &[Point],
    rule: BandwidthRule,
    noise: &NoiseSpec,
    kernel: &FlatTopKernel,
    grid_size: usize,
) -> Result<f64> {
    let auto = || -> Result<f64> {
        let ratio = BandwidthPair::for_noise(1.0, noise)?.ratio;
        let ladder = default_ladder(z)?;
        let grid = ladder_grid(z, &ladder, ratio, noise, grid_size, grid_size)?;
        Ok(select_bandwidth(z, &ladder, ratio, noise, &grid, kernel)?.h_opt)
    };
    match rule {
        BandwidthRule::Fixed(h) => Ok(h),
        BandwidthRule::Auto => auto(),
        BandwidthRule::Scaled(f) => Ok(f * auto()?),
    }
}

/// Generate, select, estimate, bootstrap, test and check coverage for one dataset.
pub fn analyze_dataset(cfg: &StudyConfig, stream: SeedStream, truth: f64) -> Result<DatasetOutcome> {
    let model = cfg.model;
    let noise = model.noise();
    let kernel = FlatTopKernel::default();
    let grid_size = model.id.grid_size();
    let (_, z) = model.gen_data(&mut stream.child(0).rng())?;
    let h = dataset_bandwidth(&z, cfg.bandwidth, &noise, &kernel, grid_size)?;
    let bw = BandwidthPair::for_noise(h, &noise)?;
    let params = PipelineParams {
        bandwidth: bw,
        noise,
        grid: default_grid(&z, bw, &noise, grid_size, grid_size)?,
        kernel,
        measure: cfg.measure,
        m_mc: cfg.m_mc,
    };
    let boot = bootstrap(&z, cfg.b, &params, stream.child(2).key())?;
    let rate = RateFactor::new(z.len(), h, noise.combined_beta())?;
    let test = relevant_test(&boot, &rate, cfg.delta, cfg.alpha)?;
    let ci = confidence_interval(&boot, 0.05)?;
    Ok(DatasetOutcome {
        theta_hat: boot.theta_hat,
        h,
        reject: test.reject,
        covered: ci.contains(truth),
    })
}

/// Runs `per_dataset` on every dataset stream and aggregates in index order.
pub fn run_study_with<F>(cfg: &StudyConfig, per_dataset: F) -> Result<StudyReport>
where
    F: Fn(usize, SeedStream) -> Result<DatasetOutcome> + Sync,
{
    cfg.validate()?;
    let truth = true_correlation(&cfg.model, cfg.measure)?;
    let root = SeedStream::new(cfg.master_seed);
    let outcomes: Vec<Result<DatasetOutcome>> = (0..cfg.reps)
        .into_par_iter()
        .map(|i| per_dataset(i, root.child(i as u64)))
        .collect();

    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (index, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(d) => ok.push(d),
            Err(e) => failures.push(DatasetFailure {
                index,
                error: e.to_string(),
            }),
        }
    }
    let completed = ok.len();
    let rejections = ok.iter().filter(|d| d.reject).count();
    let covered = ok.iter().filter(|d| d.covered).count();
    let frac = |k: usize| {
        if completed == 0 {
            f64::NAN
        } else {
            k as f64 / completed as f64
        }
    };
    let theta_hats: Vec<f64> = ok.iter().map(|d| d.theta_hat).collect();
    Ok(StudyReport {
        config: *cfg,
        truth,
        completed,
        rejections,
        covered,
        rejection_rate: frac(rejections),
        ci_coverage: frac(covered),
        mean_theta: theta_hats.iter().sum::<f64>() / completed.max(1) as f64,
        bandwidths_used: ok.iter().map(|d| d.h).collect(),
        theta_hats,
        failures,
    })
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    let truth = true_correlation(&cfg.model, cfg.measure)?;
    run_study_with(cfg, |_, stream| analyze_dataset(cfg, stream, truth))
}

/// One row of a rejection-rate table: a sample size, one study per
/// hypothesis column, and the column whose coverage is reported.
pub struct TableRow<'a> {
    pub n: usize,
    pub columns: Vec<&'a StudyReport>,
    pub coverage_from: usize,
}

/// Writes `n,h_<label>,rate_<label>,...,ci` rows, one per [`TableRow`].
pub fn write_table_csv<W: Write>(mut w: W, labels: &[&str], rows: &[TableRow<'_>]) -> io::Result<()> {
    let mut header = vec!["n".to_string()];
    for l in labels {
        header.push(format!("h_{l}"));
        header.push(format!("rate_{l}"));
    }
    header.push("ci".into());
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let mut cells = vec![row.n.to_string()];
        for r in &row.columns {
            cells.push(r.median_bandwidth().to_string());
            cells.push(r.rejection_rate.to_string());
        }
        let ci = row.columns.get(row.coverage_from).map_or(f64::NAN, |r| r.ci_coverage);
        cells.push(ci.to_string());
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionResult {
    /// `spearman(X) - spearman(Z)` per repetition.
    pub differences: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl DistortionResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "rep,difference")?;
        for (i, d) in self.differences.iter().enumerate() {
            writeln!(w, "{i},{d}")?;
        }
        Ok(())
    }
}

/// Effect of measurement error on the sample Spearman correlation.
///
/// Repetition `r` uses the stream `SeedStream::new(seed).child(r)`.
pub fn distortion_experiment(
    n: usize,
    reps: usize,
    noise: &NoiseSpec,
    latent: &Covariance,
    seed: u64,
) -> Result<DistortionResult> {
    if n < 2 || reps == 0 {
        return Err(Error::InvalidParameter(format!(
            "distortion experiment needs n >= 2 and reps >= 1 (got {n}, {reps})"
        )));
    }
    let root = SeedStream::new(seed);
    let differences = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = root.child(r as u64).rng();
            let x = latent.sample(n, &mut rng);
            let e = noise.sample(n, &mut rng);
            let z: Vec<Point> = x.iter().zip(&e).map(|(x, e)| [x[0] + e[0], x[1] + e[1]]).collect();
            Ok(spearman_rho(&x)? - spearman_rho(&z)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let k = differences.len() as f64;
    let mean = differences.iter().sum::<f64>() / k;
    let var = if reps > 1 {
        differences.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    Ok(DistortionResult {
        differences,
        mean,
        std: var.sqrt(),
    })
}
