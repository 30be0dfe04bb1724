//! Monte-Carlo draws from a gridded density.

use rand::distr::Distribution;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;

use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use crate::Point;

/// Upper end of the per-coordinate tie-breaking jitter `Uniform[0, JITTER]`.
pub const JITTER: f64 = 1e-6;

/// Alias table over the nonzero cells of a post-processed density.
///
/// Immutable after construction; share it across tasks and draw with a
/// separate generator per task.
#[derive(Debug, Clone)]
pub struct GridSampler {
    alias: WeightedAliasIndex<f64>,
    centers: Vec<Point>,
}

impl GridSampler {
    pub fn new(density: &DensityGrid) -> Result<Self> {
        if !density.is_processed() {
            return Err(Error::RawGrid);
        }
        let spec = density.spec();
        let mut weights = Vec::new();
        let mut centers = Vec::new();
        for iy in 0..spec.ny {
            let y = spec.y_center(iy);
            for ix in 0..spec.nx {
                let v = density.get(ix, iy);
                if v > 0.0 {
                    weights.push(v);
                    centers.push([spec.x_center(ix), y]);
                }
            }
        }
        let alias = WeightedAliasIndex::new(weights)
            .map_err(|e| Error::InvalidGrid(format!("cannot build alias table: {e}")))?;
        Ok(Self { alias, centers })
    }

    /// Number of cells with positive mass.
    pub fn support_len(&self) -> usize {
        self.centers.len()
    }

    /// One cell center plus jitter.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let c = self.centers[self.alias.sample(rng)];
        [c[0] + JITTER * rng.random::<f64>(), c[1] + JITTER * rng.random::<f64>()]
    }

    pub fn draw_many<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<Point> {
        (0..m).map(|_| self.draw(rng)).collect()
    }
}

/// Draws `m` jittered points from a post-processed density.
pub fn sample_density<R: Rng + ?Sized>(density: &DensityGrid, m: usize, rng: &mut R) -> Result<Vec<Point>> {
    if m == 0 {
        return Err(Error::InvalidParameter("sample size must be at least 1".into()));
    }
    Ok(GridSampler::new(density)?.draw_many(m, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::rng::SeedStream;

    fn spec() -> GridSpec {
        GridSpec::new(32, 32, (0.0, 1.0), (0.0, 2.0)).unwrap()
    }

    #[test]
    fn point_mass() {
        let s = spec();
        let d = DensityGrid::from_fn(s, |x, y| {
            if (x - s.x_center(5)).abs() < 1e-12 && (y - s.y_center(9)).abs() < 1e-12 {
                1.0
            } else {
                0.0
            }
        })
        .unwrap()
        .normalized()
        .unwrap();
        let pts = sample_density(&d, 100, &mut SeedStream::new(3).rng()).unwrap();
        for p in pts {
            assert!((0.0..=JITTER).contains(&(p[0] - s.x_center(5))));
            assert!((0.0..=JITTER).contains(&(p[1] - s.y_center(9))));
        }
    }

    #[test]
    fn raw_grid_rejected() {
        let d = DensityGrid::from_fn(spec(), |_, _| 1.0).unwrap();
        assert_eq!(
            sample_density(&d, 10, &mut SeedStream::new(0).rng()).unwrap_err(),
            Error::RawGrid
        );
    }

    #[test]
    fn uniform_grid_chi_square() {
        // 8x8 super-cells of a uniform 32x32 grid; chi-square(63) 1% critical value 92.01
        let d = DensityGrid::from_fn(spec(), |_, _| 1.0).unwrap().normalized().unwrap();
        let m = 100_000;
        let pts = sample_density(&d, m, &mut SeedStream::new(17).rng()).unwrap();
        let mut counts = [0usize; 64];
        for p in &pts {
            let bx = ((p[0] / 1.0) * 8.0) as usize;
            let by = ((p[1] / 2.0) * 8.0) as usize;
            counts[by.min(7) * 8 + bx.min(7)] += 1;
        }
        let expected = m as f64 / 64.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 92.01, "chi2 = {chi2}");
    }

    #[test]
    fn occupancy_converges_to_masses() {
        let s = GridSpec::new(16, 16, (-1.0, 1.0), (-1.0, 1.0)).unwrap();
        let d = DensityGrid::from_fn(s, |x, y| (-(x * x + 2.0 * y * y)).exp())
            .unwrap()
            .normalized()
            .unwrap();
        let m = 20_000;
        let pts = sample_density(&d, m, &mut SeedStream::new(8).rng()).unwrap();
        let mut freq = vec![0.0; s.len()];
        for p in &pts {
            let ix = ((p[0] - s.x_min) / s.dx()) as usize;
            let iy = ((p[1] - s.y_min) / s.dy()) as usize;
            freq[iy * s.nx + ix] += 1.0 / m as f64;
        }
        let tv: f64 = 0.5
            * freq
                .iter()
                .zip(d.values())
                .map(|(f, v)| (f - v * s.cell_area()).abs())
                .sum::<f64>();
        assert!(tv < 3.0 * (s.len() as f64 / m as f64).sqrt(), "tv = {tv}");
    }

    #[test]
    fn jitter_breaks_ties() {
        let d = DensityGrid::from_fn(GridSpec::new(4, 4, (0.0, 1.0), (0.0, 1.0)).unwrap(), |_, _| 1.0)
            .unwrap()
            .normalized()
            .unwrap();
        let pts = sample_density(&d, 2500, &mut SeedStream::new(1).rng()).unwrap();
        for axis in 0..2 {
            let mut v: Vec<f64> = pts.iter().map(|p| p[axis]).collect();
            v.sort_by(f64::total_cmp);
            assert!(v.windows(2).all(|w| w[0] != w[1]));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let d = DensityGrid::from_fn(spec(), |x, y| x + y)
            .unwrap()
            .normalized()
            .unwrap();
        let a = sample_density(&d, 50, &mut SeedStream::new(4).rng()).unwrap();
        let b = sample_density(&d, 50, &mut SeedStream::new(4).rng()).unwrap();
        assert_eq!(a, b);
    }
}
