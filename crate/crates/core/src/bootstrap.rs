//! Nonparametric bootstrap, relevant-hypothesis test and confidence interval.
//!
//! Replicates resample the observed pairs with replacement and rerun the
//! whole plug-in pipeline. Replicate `b` draws from the stream
//! `SeedStream::new(seed).child(b)`, so results are identical for any number
//! of worker threads.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::correlation::PipelineParams;
use crate::error::{Error, Result};
use crate::rng::{SeedStream, StreamRng};
use crate::Point;

/// Default number of bootstrap replicates.
pub const DEFAULT_B: usize = 250;

/// Normalization `sqrt(n) * h^(1 + beta)` of the estimator's limit law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFactor {
    pub n: usize,
    pub h: f64,
    pub beta: f64,
}

impl RateFactor {
    pub fn new(n: usize, h: f64, beta: f64) -> Result<Self> {
        if n == 0 || !(h > 0.0) || !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rate factor needs n > 0, h > 0, beta > 0 (got {n}, {h}, {beta})"
            )));
        }
        Ok(Self { n, h, beta })
    }

    pub fn value(&self) -> f64 {
        (self.n as f64).sqrt() * self.h.powf(1.0 + self.beta)
    }
}

/// Point estimate plus its bootstrap replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub theta_hat: f64,
    pub theta_stars: Vec<f64>,
    pub sigma_tilde_sq: f64,
}

impl BootstrapResult {
    pub fn new(theta_hat: f64, theta_stars: Vec<f64>) -> Result<Self> {
        if theta_stars.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 bootstrap replicates, got {}",
                theta_stars.len()
            )));
        }
        let sigma_tilde_sq = theta_stars
            .iter()
            .map(|t| (t - theta_hat) * (t - theta_hat))
            .sum::<f64>()
            / theta_stars.len() as f64;
        Ok(Self {
            theta_hat,
            theta_stars,
            sigma_tilde_sq,
        })
    }

    pub fn b(&self) -> usize {
        self.theta_stars.len()
    }

    pub fn sigma_tilde(&self) -> f64 {
        self.sigma_tilde_sq.sqrt()
    }

    /// 1-based order-statistic index `ceil(p * B)`, clamped to `1..=B`.
    fn order_index(&self, p: f64) -> usize {
        ((p * self.b() as f64).ceil() as usize).clamp(1, self.b())
    }

    /// Empirical `p`-quantile of the centered replicates `theta* - theta_hat`.
    pub fn centered_quantile(&self, p: f64) -> f64 {
        let mut d: Vec<f64> = self.theta_stars.iter().map(|t| t - self.theta_hat).collect();
        d.sort_by(f64::total_cmp);
        d[self.order_index(p) - 1]
    }

    /// Empirical `p`-quantile of `rate * (theta* - theta_hat)`.
    pub fn quantile(&self, p: f64, rate: f64) -> f64 {
        let mut d: Vec<f64> = self.theta_stars.iter().map(|t| rate * (t - self.theta_hat)).collect();
        d.sort_by(f64::total_cmp);
        d[self.order_index(p) - 1]
    }
}

/// Bootstrap with an arbitrary estimator in place of the plug-in pipeline.
///
/// `estimator` receives a sample and a generator; it is called once on the
/// original data (stream `SeedStream::new(seed)`) and once per replicate.
pub fn bootstrap_with<F>(sample: &[Point], b: usize, seed: u64, estimator: F) -> Result<BootstrapResult>
where
    F: Fn(&[Point], &mut StreamRng) -> Result<f64> + Sync,
{
    if b < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 bootstrap replicates, got {b}"
        )));
    }
    if sample.is_empty() {
        return Err(Error::TooFewPoints { required: 1, actual: 0 });
    }
    let root = SeedStream::new(seed);
    let theta_hat = estimator(sample, &mut root.rng())?;
    let n = sample.len();
    let outcomes: Vec<Result<f64>> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.child(i as u64).rng();
            let resample: Vec<Point> = (0..n).map(|_| sample[rng.random_range(0..n)]).collect();
            estimator(&resample, &mut rng)
        })
        .collect();
    let mut stars = Vec::with_capacity(b);
    for (index, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(t) => stars.push(t),
            Err(e) => {
                return Err(Error::Replicate {
                    index,
                    source: Box::new(e),
                })
            }
        }
    }
    BootstrapResult::new(theta_hat, stars)
}

/// Bootstrap of the full plug-in pipeline.
pub fn bootstrap(sample: &[Point], b: usize, params: &PipelineParams, seed: u64) -> Result<BootstrapResult> {
    bootstrap_with(sample, b, seed, |s, rng| params.evaluate(s, rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// Standard-normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Two-sided normal interval `theta_hat -+ z_{1 - alpha/2} * sigma_tilde`.
pub fn confidence_interval(r: &BootstrapResult, alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    let half = normal_quantile(1.0 - 0.5 * alpha) * r.sigma_tilde();
    Ok(ConfidenceInterval {
        lo: r.theta_hat - half,
        hi: r.theta_hat + half,
        level: 1.0 - alpha,
    })
}

/// Outcome of testing `H0: |theta| <= delta` at level `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub delta: f64,
    pub alpha: f64,
    pub statistic: f64,
    pub critical: f64,
    pub reject: bool,
    pub delta_min: f64,
}

/// Smallest threshold that is not rejected: `max(0, |theta_hat| - q*_{1-alpha} / rate)`.
///
/// Computed on the unscaled replicates, so it does not depend on the rate.
pub fn delta_min(r: &BootstrapResult, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((r.theta_hat.abs() - r.centered_quantile(1.0 - alpha)).max(0.0))
}

/// Bootstrap test of `H0(delta): |theta| <= delta`.
///
/// `statistic = rate * (|theta_hat| - delta)` is compared against the
/// `(1 - alpha)` bootstrap quantile of `rate * (theta* - theta_hat)`. The
/// decision is taken as `delta < delta_min`, which is the same rule with the
/// rate cancelled out.
pub fn relevant_test(r: &BootstrapResult, rate: &RateFactor, delta: f64, alpha: f64) -> Result<TestOutcome> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("delta must be >= 0, got {delta}")));
    }
    let dmin = delta_min(r, alpha)?;
    let scale = rate.value();
    Ok(TestOutcome {
        delta,
        alpha,
        statistic: scale * (r.theta_hat.abs() - delta),
        critical: r.quantile(1.0 - alpha, scale),
        reject: delta < dmin,
        delta_min: dmin,
    })
}
