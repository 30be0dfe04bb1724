//! Rank correlations and the plug-in estimator built on the deconvolved density.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::deconv::{estimate_density, BandwidthPair};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::kernel::FlatTopKernel;
use crate::noise::NoiseSpec;
use crate::rng::SeedStream;
use crate::sampler::sample_density;
use crate::Point;

/// Default number of Monte-Carlo draws per plug-in evaluation.
pub const DEFAULT_M_MC: usize = 2500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMeasure {
    KendallTau,
    SpearmanRho,
}

impl CorrelationMeasure {
    pub fn compute(self, points: &[Point]) -> Result<f64> {
        match self {
            CorrelationMeasure::KendallTau => kendall_tau(points),
            CorrelationMeasure::SpearmanRho => spearman_rho(points),
        }
    }
}

impl fmt::Display for CorrelationMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorrelationMeasure::KendallTau => "kendall",
            CorrelationMeasure::SpearmanRho => "spearman",
        })
    }
}

impl FromStr for CorrelationMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kendall" | "kendall_tau" | "tau" => Ok(CorrelationMeasure::KendallTau),
            "spearman" | "spearman_rho" | "rho" => Ok(CorrelationMeasure::SpearmanRho),
            other => Err(Error::InvalidParameter(format!("unknown measure '{other}'"))),
        }
    }
}

fn require_pairs(points: &[Point]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            required: 2,
            actual: points.len(),
        });
    }
    Ok(())
}

/// Number of unordered pairs inside runs of equal values of a sorted slice.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> i64 {
    let mut total = 0i64;
    let mut run = 1i64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` and returns the number of strict inversions it contained.
fn count_inversions(v: &mut [f64]) -> i64 {
    let mut buf = v.to_vec();
    let n = v.len();
    let mut swaps = 0i64;
    let mut width = 1;
    // bottom-up merge sort; `src` alternates between `v` and `buf`
    let mut in_v = true;
    while width < n {
        {
            let (src, dst): (&[f64], &mut [f64]) = if in_v { (&*v, &mut buf) } else { (&buf, &mut *v) };
            let mut start = 0;
            while start < n {
                let mid = (start + width).min(n);
                let end = (start + 2 * width).min(n);
                let (mut i, mut j, mut k) = (start, mid, start);
                while i < mid && j < end {
                    if src[j] < src[i] {
                        dst[k] = src[j];
                        swaps += (mid - i) as i64;
                        j += 1;
                    } else {
                        dst[k] = src[i];
                        i += 1;
                    }
                    k += 1;
                }
                dst[k..k + (mid - i)].copy_from_slice(&src[i..mid]);
                k += mid - i;
                dst[k..k + (end - j)].copy_from_slice(&src[j..end]);
                start = end;
            }
        }
        in_v = !in_v;
        width *= 2;
    }
    if !in_v {
        v.copy_from_slice(&buf);
    }
    swaps
}

/// `sum_{i<j} sign(x_i - x_j) sign(y_i - y_j)` in `O(m log m)`.
fn kendall_score(points: &[Point]) -> i64 {
    let m = points.len() as i64;
    let mut sorted: Vec<Point> = points.to_vec();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let xs: Vec<f64> = sorted.iter().map(|p| p[0]).collect();
    let tied_x = tied_pairs(&xs);
    let joint = tied_pairs(&sorted);
    let mut ys: Vec<f64> = sorted.iter().map(|p| p[1]).collect();
    let discordant = count_inversions(&mut ys);
    let tied_y = tied_pairs(&ys);
    m * (m - 1) / 2 - tied_x - tied_y + joint - 2 * discordant
}

/// Kendall's tau: the average of `sign(dx) * sign(dy)` over all pairs.
pub fn kendall_tau(points: &[Point]) -> Result<f64> {
    require_pairs(points)?;
    let m = points.len() as i64;
    Ok(kendall_score(points) as f64 / (m * (m - 1) / 2) as f64)
}

/// Direct `O(m^2)` evaluation of the same pair average.
pub fn kendall_tau_brute_force(points: &[Point]) -> Result<f64> {
    require_pairs(points)?;
    let sign = |d: f64| match d.partial_cmp(&0.0) {
        Some(Ordering::Greater) => 1i64,
        Some(Ordering::Less) => -1,
        _ => 0,
    };
    let mut s = 0i64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            s += sign(a[0] - b[0]) * sign(a[1] - b[1]);
        }
    }
    let m = points.len() as i64;
    Ok(s as f64 / (m * (m - 1) / 2) as f64)
}

/// 1-based ranks, averaging over ties.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + (j + 1)) as f64;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman's rho via `1 - 6 sum d^2 / (m (m^2 - 1))`.
pub fn spearman_rho(points: &[Point]) -> Result<f64> {
    require_pairs(points)?;
    let rx = ranks(&points.iter().map(|p| p[0]).collect::<Vec<_>>());
    let ry = ranks(&points.iter().map(|p| p[1]).collect::<Vec<_>>());
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    let m = points.len() as f64;
    Ok(1.0 - 6.0 * d2 / (m * (m * m - 1.0)))
}

/// Everything the plug-in pipeline needs besides the data and a seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub bandwidth: BandwidthPair,
    pub noise: NoiseSpec,
    pub grid: GridSpec,
    pub kernel: FlatTopKernel,
    pub measure: CorrelationMeasure,
    pub m_mc: usize,
}

impl PipelineParams {
    /// Deconvolve, threshold, draw `m_mc` points and measure them.
    pub fn evaluate<R: Rng + ?Sized>(&self, sample: &[Point], rng: &mut R) -> Result<f64> {
        let density = estimate_density(sample, self.bandwidth, &self.noise, &self.grid, &self.kernel)?;
        let draws = sample_density(&density, self.m_mc, rng)?;
        self.measure.compute(&draws)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateParams {
    pub h: f64,
    pub ratio: f64,
    pub grid: GridSpec,
    pub m_mc: usize,
    pub seed: u64,
    pub noise: NoiseSpec,
}

/// Plug-in correlation estimate together with the inputs that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub measure: CorrelationMeasure,
    pub theta_hat: f64,
    pub params: EstimateParams,
}

/// Runs the plug-in pipeline with a generator derived from `seed`.
pub fn estimate_correlation(sample: &[Point], params: &PipelineParams, seed: u64) -> Result<CorrelationEstimate> {
    let theta_hat = params.evaluate(sample, &mut SeedStream::new(seed).rng())?;
    Ok(CorrelationEstimate {
        measure: params.measure,
        theta_hat,
        params: EstimateParams {
            h: params.bandwidth.h,
            ratio: params.bandwidth.ratio,
            grid: params.grid,
            m_mc: params.m_mc,
            seed,
            noise: params.noise,
        },
    })
}
