//! Known measurement-error distributions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    /// Independent Laplace marginals with the given variances.
    LaplaceDiagonal,
    None,
}

/// Additive noise distribution with per-coordinate variances.
///
/// Variances are in squared data units; a Laplace marginal with variance `v`
/// has scale `b = sqrt(v / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseRecord", into = "NoiseRecord")]
pub struct NoiseSpec {
    family: NoiseFamily,
    v1: f64,
    v2: f64,
}

#[derive(Serialize, Deserialize)]
struct NoiseRecord {
    family: NoiseFamily,
    v1: f64,
    v2: f64,
}

impl TryFrom<NoiseRecord> for NoiseSpec {
    type Error = Error;

    fn try_from(r: NoiseRecord) -> Result<Self> {
        match r.family {
            NoiseFamily::None => {
                if r.v1 != 0.0 || r.v2 != 0.0 {
                    return Err(Error::InvalidNoise("family none requires zero variances".into()));
                }
                Ok(NoiseSpec::none())
            }
            NoiseFamily::LaplaceDiagonal => NoiseSpec::laplace(r.v1, r.v2),
        }
    }
}

impl From<NoiseSpec> for NoiseRecord {
    fn from(s: NoiseSpec) -> Self {
        NoiseRecord {
            family: s.family,
            v1: s.v1,
            v2: s.v2,
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            family: NoiseFamily::None,
            v1: 0.0,
            v2: 0.0,
        }
    }

    pub fn laplace(v1: f64, v2: f64) -> Result<Self> {
        if !(v1.is_finite() && v2.is_finite() && v1 > 0.0 && v2 > 0.0) {
            return Err(Error::InvalidNoise(format!(
                "Laplace variances must be positive and finite, got ({v1}, {v2})"
            )));
        }
        Ok(Self {
            family: NoiseFamily::LaplaceDiagonal,
            v1,
            v2,
        })
    }

    pub fn family(&self) -> NoiseFamily {
        self.family
    }

    pub fn variances(&self) -> (f64, f64) {
        (self.v1, self.v2)
    }

    pub fn std_devs(&self) -> (f64, f64) {
        (self.v1.sqrt(), self.v2.sqrt())
    }

    pub fn is_none(&self) -> bool {
        self.family == NoiseFamily::None
    }

    /// Polynomial decay exponent of the characteristic function along one axis.
    pub fn beta(&self) -> f64 {
        2.0
    }

    /// Exponent used in the rate factor: the product CF decays like
    /// `|t1|^-2 |t2|^-2`, giving 4 in total.
    pub fn combined_beta(&self) -> f64 {
        2.0 * self.beta()
    }

    /// Characteristic function at frequency `(t1, t2)`. Real and in `(0, 1]`.
    pub fn cf(&self, t1: f64, t2: f64) -> f64 {
        self.cf_axis(0, t1) * self.cf_axis(1, t2)
    }

    /// Marginal characteristic function along `axis` (0 = x, 1 = y).
    pub fn cf_axis(&self, axis: usize, t: f64) -> f64 {
        match self.family {
            NoiseFamily::None => 1.0,
            NoiseFamily::LaplaceDiagonal => {
                let v = if axis == 0 { self.v1 } else { self.v2 };
                1.0 / (1.0 + 0.5 * v * t * t)
            }
        }
    }

    /// Draws `n` independent noise pairs.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Point> {
        match self.family {
            NoiseFamily::None => vec![[0.0, 0.0]; n],
            NoiseFamily::LaplaceDiagonal => {
                let b1 = (0.5 * self.v1).sqrt();
                let b2 = (0.5 * self.v2).sqrt();
                (0..n).map(|_| [laplace(rng, b1), laplace(rng, b2)]).collect()
            }
        }
    }
}

/// Inverse-CDF draw from Laplace(0, b).
fn laplace<R: Rng + ?Sized>(rng: &mut R, b: f64) -> f64 {
    // u in (-1/2, 1/2]; the open lower end keeps the log finite
    let u: f64 = 0.5 - rng.random::<f64>();
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}
