use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Separable flat-top kernel, specified through its Fourier transform.
///
/// The transform equals 1 on the square `|u|_inf <= c`, vanishes outside
/// `|u|_inf < 1`, and tapers smoothly in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatTopKernel {
    c: f64,
}

impl Default for FlatTopKernel {
    fn default() -> Self {
        Self { c: 0.5 }
    }
}

impl FlatTopKernel {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "flat-top plateau half-width must lie in (0, 1), got {c}"
            )));
        }
        Ok(Self { c })
    }

    pub fn plateau(&self) -> f64 {
        self.c
    }

    /// One-dimensional transform.
    pub fn cf_1d(&self, s: f64) -> f64 {
        let a = s.abs();
        if a <= self.c {
            1.0
        } else if a >= 1.0 {
            0.0
        } else {
            let r = (a - self.c) / (1.0 - self.c);
            (-r * r / (1.0 - r * r)).exp()
        }
    }

    /// Two-dimensional transform `phi(u1) * phi(u2)`.
    pub fn cf(&self, u1: f64, u2: f64) -> f64 {
        self.cf_1d(u1) * self.cf_1d(u2)
    }
}
