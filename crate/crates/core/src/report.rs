//! End-to-end inference on one dataset and its serializable record.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap, confidence_interval, delta_min, relevant_test, RateFactor};
use crate::correlation::{CorrelationMeasure, PipelineParams};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::noise::NoiseSpec;
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub delta: f64,
    pub reject: bool,
    pub statistic: f64,
    pub critical: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub measure: CorrelationMeasure,
    pub h: f64,
    pub ratio: f64,
    pub grid: GridSpec,
    pub m_mc: usize,
    pub noise: NoiseSpec,
    pub kernel_plateau: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub theta_hat: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub sigma_tilde: f64,
    pub alpha: f64,
    pub ci: [f64; 2],
    pub tests: Vec<TestRecord>,
    pub delta_min: f64,
    pub params: ReportParams,
    pub seed: u64,
    /// Free-form annotations that are not part of the result.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

/// Estimate, bootstrap, interval, a test per threshold, and `delta_min`.
///
/// `deltas` must be non-negative and ascending; it may be empty.
pub fn run_inference(
    sample: &[Point],
    params: &PipelineParams,
    b: usize,
    alpha: f64,
    deltas: &[f64],
    seed: u64,
) -> Result<InferenceReport> {
    if deltas.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) || !deltas.windows(2).all(|w| w[0] <= w[1]) {
        return Err(Error::InvalidParameter(
            "deltas must be finite, non-negative and ascending".into(),
        ));
    }
    let boot = bootstrap(sample, b, params, seed)?;
    let rate = RateFactor::new(sample.len(), params.bandwidth.h, params.noise.combined_beta())?;
    let ci = confidence_interval(&boot, alpha)?;
    let tests = deltas
        .iter()
        .map(|&d| {
            let t = relevant_test(&boot, &rate, d, alpha)?;
            Ok(TestRecord {
                delta: d,
                reject: t.reject,
                statistic: t.statistic,
                critical: t.critical,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InferenceReport {
        theta_hat: boot.theta_hat,
        b,
        sigma_tilde: boot.sigma_tilde(),
        alpha,
        ci: [ci.lo, ci.hi],
        tests,
        delta_min: delta_min(&boot, alpha)?,
        params: ReportParams {
            measure: params.measure,
            h: params.bandwidth.h,
            ratio: params.bandwidth.ratio,
            grid: params.grid,
            m_mc: params.m_mc,
            noise: params.noise,
            kernel_plateau: params.kernel.plateau(),
            rate: rate.value(),
        },
        seed,
        metadata: BTreeMap::new(),
    })
}
