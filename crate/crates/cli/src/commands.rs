//! Command implementations shared by the binary and the tests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use decorrel::bandwidth::{
    default_ladder, ladder_grid, mock_density_bandwidth, select_bandwidth, BandwidthSelection, DEFAULT_MOCK_REPLICAS,
};
use decorrel::deconv::default_grid;
use decorrel::models::Covariance;
use decorrel::study::{
    distortion_experiment, run_study, write_table_csv, DistortionResult, StudyConfig, StudyReport, TableRow,
};
use decorrel::{
    estimate_density, run_inference, BandwidthPair, FlatTopKernel, InferenceReport, NoiseSpec, PipelineParams,
    SeedStream,
};
use serde::Serialize;

use crate::config::{AnalysisConfig, BandwidthChoice};
use crate::dataset::Dataset;
use crate::error::{CliError, CliResult};

/// How the bandwidth in a report was obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthInfo {
    pub choice: BandwidthChoice,
    /// Bandwidth before scaling.
    pub selected: f64,
    pub scale: f64,
    /// Bandwidth actually used, `selected * scale`.
    pub h: f64,
    pub ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ladder_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flat_curve: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mock_fallback: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputInfo {
    pub source: String,
    pub n: usize,
    pub x: String,
    pub y: String,
    pub skipped_rows: usize,
}

impl InputInfo {
    fn of(d: &Dataset) -> Self {
        Self {
            source: d.source.display().to_string(),
            n: d.pairs.len(),
            x: d.labels.0.clone(),
            y: d.labels.1.clone(),
            skipped_rows: d.warnings.len(),
        }
    }
}

/// Seed used for mock-density replicas, kept apart from the bootstrap streams.
fn mock_seed(seed: u64) -> u64 {
    SeedStream::new(seed).child(u64::MAX).key()
}

/// Runs the configured selector and returns the full selection where one exists.
pub fn choose_bandwidth(
    data: &Dataset,
    cfg: &AnalysisConfig,
    seed: u64,
) -> CliResult<(BandwidthInfo, Option<BandwidthSelection>)> {
    let noise = cfg.noise_spec()?;
    let ratio = BandwidthPair::for_noise(1.0, &noise)?.ratio;
    let kernel = FlatTopKernel::default();
    let z = &data.pairs;
    let (selected, sel, mock_fallback) = match cfg.bandwidth {
        BandwidthChoice::Fixed(h) => (h, None, None),
        BandwidthChoice::Auto => {
            let ladder = default_ladder(z)?;
            let grid = ladder_grid(z, &ladder, ratio, &noise, cfg.nx, cfg.ny)?;
            let s = select_bandwidth(z, &ladder, ratio, &noise, &grid, &kernel)?;
            (s.h_opt, Some(s), None)
        }
        BandwidthChoice::Mock => {
            let ladder = default_ladder(z)?;
            let m = mock_density_bandwidth(
                z,
                &ladder,
                ratio,
                &noise,
                &kernel,
                (cfg.nx, cfg.ny),
                DEFAULT_MOCK_REPLICAS,
                mock_seed(seed),
            )?;
            (m.h_opt, None, Some(m.fallback))
        }
    };
    let info = BandwidthInfo {
        choice: cfg.bandwidth,
        selected,
        scale: cfg.bandwidth_scale,
        h: selected * cfg.bandwidth_scale,
        ratio,
        ladder_index: sel.as_ref().map(|s| s.index),
        flat_curve: sel.as_ref().map(|s| s.flat),
        mock_fallback,
    };
    Ok((info, sel))
}

pub fn pipeline_params(data: &Dataset, cfg: &AnalysisConfig, h: f64) -> CliResult<PipelineParams> {
    let noise = cfg.noise_spec()?;
    let bandwidth = BandwidthPair::for_noise(h, &noise)?;
    Ok(PipelineParams {
        bandwidth,
        noise,
        grid: default_grid(&data.pairs, bandwidth, &noise, cfg.nx, cfg.ny)?,
        kernel: FlatTopKernel::default(),
        measure: cfg.measure,
        m_mc: cfg.m_mc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeOutput {
    #[serde(flatten)]
    pub report: InferenceReport,
    pub bandwidth: BandwidthInfo,
    pub input: InputInfo,
    pub config: AnalysisConfig,
}

pub fn analyze(data: &Dataset, cfg: &AnalysisConfig, seed: u64) -> CliResult<AnalyzeOutput> {
    cfg.validate()?;
    let (bandwidth, _) = choose_bandwidth(data, cfg, seed)?;
    let params = pipeline_params(data, cfg, bandwidth.h)?;
    let mut report = run_inference(&data.pairs, &params, cfg.b, cfg.alpha, &cfg.deltas, seed)?;
    report
        .metadata
        .insert("version".into(), env!("CARGO_PKG_VERSION").into());
    let mut echo = cfg.clone();
    echo.seed = Some(seed);
    Ok(AnalyzeOutput {
        report,
        bandwidth,
        input: InputInfo::of(data),
        config: echo,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateOutput {
    pub theta_hat: f64,
    pub estimate: decorrel::CorrelationEstimate,
    pub bandwidth: BandwidthInfo,
    pub input: InputInfo,
}

pub fn estimate(data: &Dataset, cfg: &AnalysisConfig, seed: u64) -> CliResult<EstimateOutput> {
    cfg.validate()?;
    let (bandwidth, _) = choose_bandwidth(data, cfg, seed)?;
    let params = pipeline_params(data, cfg, bandwidth.h)?;
    let estimate = decorrel::estimate_correlation(&data.pairs, &params, seed)?;
    Ok(EstimateOutput {
        theta_hat: estimate.theta_hat,
        estimate,
        bandwidth,
        input: InputInfo::of(data),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CiOutput {
    pub theta_hat: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub sigma_tilde: f64,
    pub alpha: f64,
    pub ci: [f64; 2],
    pub seed: u64,
    pub bandwidth: BandwidthInfo,
}

pub fn ci(data: &Dataset, cfg: &AnalysisConfig, seed: u64) -> CliResult<CiOutput> {
    let mut c = cfg.clone();
    c.deltas.clear();
    let a = analyze(data, &c, seed)?;
    Ok(CiOutput {
        theta_hat: a.report.theta_hat,
        b: a.report.b,
        sigma_tilde: a.report.sigma_tilde,
        alpha: a.report.alpha,
        ci: a.report.ci,
        seed,
        bandwidth: a.bandwidth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestOutput {
    pub theta_hat: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub alpha: f64,
    pub tests: Vec<decorrel::report::TestRecord>,
    pub delta_min: f64,
    pub seed: u64,
    pub bandwidth: BandwidthInfo,
}

pub fn test(data: &Dataset, cfg: &AnalysisConfig, seed: u64) -> CliResult<TestOutput> {
    if cfg.deltas.is_empty() {
        return Err(CliError::Usage("test needs at least one delta".into()));
    }
    let a = analyze(data, cfg, seed)?;
    Ok(TestOutput {
        theta_hat: a.report.theta_hat,
        b: a.report.b,
        alpha: a.report.alpha,
        tests: a.report.tests,
        delta_min: a.report.delta_min,
        seed,
        bandwidth: a.bandwidth,
    })
}

/// Successive-difference curve of the automatic selector.
pub fn bandwidth_curve(data: &Dataset, cfg: &AnalysisConfig, seed: u64) -> CliResult<BandwidthSelection> {
    let mut c = cfg.clone();
    c.bandwidth = BandwidthChoice::Auto;
    let (_, sel) = choose_bandwidth(data, &c, seed)?;
    Ok(sel.expect("automatic selection yields a curve"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityFormat {
    Csv,
    Binary,
}

/// Writes the estimate at `h` and at `j/2 * h`, `j = 1, 2, 3`.
///
/// Returns the written paths in that order.
pub fn density(
    data: &Dataset,
    cfg: &AnalysisConfig,
    seed: u64,
    out_dir: &Path,
    format: DensityFormat,
) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    let noise: NoiseSpec = cfg.noise_spec()?;
    let (info, _) = choose_bandwidth(data, cfg, seed)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let ext = match format {
        DensityFormat::Csv => "csv",
        DensityFormat::Binary => "bin",
    };
    let mut jobs = vec![("density_h".to_string(), info.h)];
    jobs.extend((1..=3).map(|j| (format!("density_j{j}"), 0.5 * j as f64 * info.h)));
    let mut written = Vec::new();
    for (name, h) in jobs {
        let params = pipeline_params(data, cfg, h)?;
        let d = estimate_density(&data.pairs, params.bandwidth, &noise, &params.grid, &params.kernel)?;
        let path = out_dir.join(format!("{name}.{ext}"));
        let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = std::io::BufWriter::new(file);
        match format {
            DensityFormat::Csv => d.write_csv(&mut w),
            DensityFormat::Binary => d.write_binary(&mut w),
        }
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

pub fn simulate(cfg: &StudyConfig) -> CliResult<StudyReport> {
    Ok(run_study(cfg)?)
}

/// One-row table for a single study.
pub fn study_table<W: Write>(w: W, report: &StudyReport) -> std::io::Result<()> {
    let rows = [TableRow {
        n: report.config.model.n,
        columns: vec![report],
        coverage_from: 0,
    }];
    write_table_csv(w, &["study"], &rows)
}

pub fn distortion(n: usize, reps: usize, noise: &NoiseSpec, rho: f64, seed: u64) -> CliResult<DistortionResult> {
    let latent = Covariance::correlated(rho)?;
    Ok(distortion_experiment(n, reps, noise, &latent, seed)?)
}

/// Pretty JSON followed by a newline.
pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}
