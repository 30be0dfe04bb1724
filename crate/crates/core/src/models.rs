//! Bivariate normal latent models with Laplace measurement error.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationMeasure;
use crate::error::{Error, Result};
use crate::grid::{DensityGrid, GridSpec};
use crate::noise::NoiseSpec;
use crate::Point;

/// Symmetric 2x2 covariance `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Covariance {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Covariance {
    pub fn new(xx: f64, xy: f64, yy: f64) -> Result<Self> {
        let c = Self { xx, xy, yy };
        if !(xx > 0.0 && yy > 0.0 && c.det() > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "covariance [[{xx}, {xy}], [{xy}, {yy}]] is not positive definite"
            )));
        }
        Ok(c)
    }

    /// Unit variances with correlation `rho`.
    pub fn correlated(rho: f64) -> Result<Self> {
        Self::new(1.0, rho, 1.0)
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn correlation(&self) -> f64 {
        self.xy / (self.xx * self.yy).sqrt()
    }

    /// Centered normal draws via the Cholesky factor.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Point> {
        let l11 = self.xx.sqrt();
        let l21 = self.xy / l11;
        let l22 = (self.yy - l21 * l21).sqrt();
        (0..n)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                [l11 * a, l21 * a + l22 * b]
            })
            .collect()
    }

    pub fn density(&self, x: f64, y: f64) -> f64 {
        let det = self.det();
        let q = (self.yy * x * x - 2.0 * self.xy * x * y + self.xx * y * y) / det;
        (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
    }

    /// The normal density evaluated on `spec` and rescaled to unit grid mass.
    pub fn density_grid(&self, spec: GridSpec) -> Result<DensityGrid> {
        DensityGrid::from_fn(spec, |x, y| self.density(x, y))?.normalized()
    }

    /// Kendall's tau of the Gaussian copula, `(2/pi) asin(rho)`.
    pub fn kendall_tau(&self) -> f64 {
        2.0 / PI * self.correlation().asin()
    }

    /// Spearman's rho of the Gaussian copula, `(6/pi) asin(rho/2)`.
    pub fn spearman_rho(&self) -> f64 {
        6.0 / PI * (0.5 * self.correlation()).asin()
    }

    pub fn rank_correlation(&self, measure: CorrelationMeasure) -> f64 {
        match measure {
            CorrelationMeasure::KendallTau => self.kendall_tau(),
            CorrelationMeasure::SpearmanRho => self.spearman_rho(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelId {
    /// Unit variances, isotropic noise `diag(0.05, 0.05)`.
    #[serde(rename = "1")]
    One,
    /// Variances `(1, 3)`, anisotropic noise `diag(0.061, 0.0025)`.
    #[serde(rename = "2")]
    Two,
}

impl ModelId {
    pub fn from_number(id: u32) -> Result<Self> {
        match id {
            1 => Ok(ModelId::One),
            2 => Ok(ModelId::Two),
            other => Err(Error::InvalidParameter(format!("unknown model {other}"))),
        }
    }

    pub fn number(self) -> u32 {
        match self {
            ModelId::One => 1,
            ModelId::Two => 2,
        }
    }

    pub fn noise(self) -> NoiseSpec {
        let (v1, v2) = match self {
            ModelId::One => (0.05, 0.05),
            ModelId::Two => (0.061, 0.0025),
        };
        NoiseSpec::laplace(v1, v2).expect("model noise variances are positive")
    }

    /// FFT grid side length used for this model.
    pub fn grid_size(self) -> usize {
        match self {
            ModelId::One => 512,
            ModelId::Two => 1024,
        }
    }
}

/// One of the two simulation models at a given covariance and sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: ModelId,
    pub sigma: f64,
    pub n: usize,
}

impl ModelSpec {
    pub fn new(id: ModelId, sigma: f64, n: usize) -> Result<Self> {
        let spec = Self { id, sigma, n };
        spec.latent()?;
        Ok(spec)
    }

    pub fn latent(&self) -> Result<Covariance> {
        match self.id {
            ModelId::One => Covariance::new(1.0, self.sigma, 1.0),
            ModelId::Two => Covariance::new(1.0, self.sigma, 3.0),
        }
    }

    pub fn noise(&self) -> NoiseSpec {
        self.id.noise()
    }

    /// Latent draws `X` and their noisy observations `Z = X + eps`.
    pub fn gen_data<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vec<Point>, Vec<Point>)> {
        let latent = self.latent()?.sample(self.n, rng);
        let eps = self.noise().sample(self.n, rng);
        let observed = latent
            .iter()
            .zip(&eps)
            .map(|(x, e)| [x[0] + e[0], x[1] + e[1]])
            .collect();
        Ok((latent, observed))
    }
}

/// Population rank correlation of the latent normal of `model`.
pub fn true_correlation(model: &ModelSpec, measure: CorrelationMeasure) -> Result<f64> {
    Ok(model.latent()?.rank_correlation(measure))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::kendall_tau;
    use crate::rng::SeedStream;

    fn moments(p: &[Point]) -> (f64, f64, f64) {
        let n = p.len() as f64;
        let mx = p.iter().map(|v| v[0]).sum::<f64>() / n;
        let my = p.iter().map(|v| v[1]).sum::<f64>() / n;
        let vx = p.iter().map(|v| (v[0] - mx).powi(2)).sum::<f64>() / n;
        let vy = p.iter().map(|v| (v[1] - my).powi(2)).sum::<f64>() / n;
        let c = p.iter().map(|v| (v[0] - mx) * (v[1] - my)).sum::<f64>() / n;
        (vx, vy, c / (vx * vy).sqrt())
    }

    #[test]
    fn gen_data_moments() {
        let mut rng = SeedStream::new(2).rng();
        let (x, z) = ModelSpec::new(ModelId::One, 0.5, 100_000)
            .unwrap()
            .gen_data(&mut rng)
            .unwrap();
        assert!((moments(&x).2 - 0.5).abs() < 0.01);
        let (vx, vy, _) = moments(&z);
        assert!((vx - 1.05).abs() < 0.03 && (vy - 1.05).abs() < 0.03);

        let (x, _) = ModelSpec::new(ModelId::Two, 0.1, 100_000)
            .unwrap()
            .gen_data(&mut rng)
            .unwrap();
        let (vx, vy, _) = moments(&x);
        assert!((vx - 1.0).abs() < 0.02 && (vy / 3.0 - 1.0).abs() < 0.02);

        let (x, _) = ModelSpec::new(ModelId::One, 0.0, 100_000)
            .unwrap()
            .gen_data(&mut rng)
            .unwrap();
        assert!(moments(&x).2.abs() < 0.01);
    }

    #[test]
    fn true_correlation_examples() {
        let k = CorrelationMeasure::KendallTau;
        let s = CorrelationMeasure::SpearmanRho;
        let m = |id, sigma| ModelSpec::new(id, sigma, 10).unwrap();
        assert!((true_correlation(&m(ModelId::One, 0.5), k).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((true_correlation(&m(ModelId::Two, 0.23), k).unwrap() - 0.0848).abs() < 5e-5);
        assert!((true_correlation(&m(ModelId::Two, 0.1), s).unwrap() - 0.0551).abs() < 5e-5);
    }

    #[test]
    fn kendall_oracle_matches_monte_carlo() {
        let mut rng = SeedStream::new(9).rng();
        for &(rho, yy) in &[(0.3, 1.0f64), (-0.6, 2.0), (0.9, 0.5)] {
            let cov = Covariance::new(1.0, rho * yy.sqrt(), yy).unwrap();
            let tau = kendall_tau(&cov.sample(200_000, &mut rng)).unwrap();
            assert!((tau - cov.kendall_tau()).abs() < 0.006, "rho={rho}: {tau}");
        }
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(ModelSpec::new(ModelId::One, 1.0, 10).is_err());
        assert!(ModelSpec::new(ModelId::Two, 1.5, 10).is_ok());
        assert!(ModelSpec::new(ModelId::Two, 1.8, 10).is_err());
        assert!(ModelId::from_number(3).is_err());
    }

    #[test]
    fn density_grid_is_normalized_gaussian() {
        let cov = Covariance::new(1.0, 0.3, 2.0).unwrap();
        let spec = GridSpec::new(128, 128, (-8.0, 8.0), (-10.0, 10.0)).unwrap();
        let raw = DensityGrid::from_fn(spec, |x, y| cov.density(x, y)).unwrap();
        assert!((raw.mass() - 1.0).abs() < 1e-6);
        assert!((cov.density_grid(spec).unwrap().mass() - 1.0).abs() < 1e-12);
    }
}
