//! Successive-difference bandwidth selection.
//!
//! Along a log-spaced ladder `h_1 < ... < h_m` the post-processed estimates
//! change quickly while the estimator overfits and slowly once it is
//! smoothing enough. The selector returns the ladder point where the L2
//! distance to the next estimate is smallest.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deconv::{default_grid, estimate_density, BandwidthPair};
use crate::error::{Error, Result};
use crate::grid::{DensityGrid, GridSpec};
use crate::kernel::FlatTopKernel;
use crate::models::Covariance;
use crate::noise::NoiseSpec;
use crate::rng::SeedStream;
use crate::Point;

/// Default ladder length.
pub const DEFAULT_LADDER_LEN: usize = 20;
/// Default ladder span relative to the reference bandwidth.
pub const DEFAULT_LADDER_SPAN: (f64, f64) = (0.25, 4.0);
/// Synthetic datasets drawn by [`mock_density_bandwidth`].
pub const DEFAULT_MOCK_REPLICAS: usize = 10;

/// `m` log-spaced bandwidths from `h_min` to `h_max` inclusive.
pub fn bandwidth_ladder(h_min: f64, h_max: f64, m: usize) -> Result<Vec<f64>> {
    if !(h_min > 0.0 && h_max > h_min && h_max.is_finite()) || m < 3 {
        return Err(Error::InvalidParameter(format!(
            "ladder needs 0 < h_min < h_max and m >= 3 (got {h_min}, {h_max}, {m})"
        )));
    }
    let step = (h_max / h_min).ln() / (m - 1) as f64;
    let mut v: Vec<f64> = (0..m).map(|i| h_min * (step * i as f64).exp()).collect();
    v[m - 1] = h_max;
    Ok(v)
}

/// `n^(-1/6)` times the smaller coordinate standard deviation.
pub fn reference_bandwidth(sample: &[Point]) -> Result<f64> {
    if sample.len() < 2 {
        return Err(Error::TooFewPoints {
            required: 2,
            actual: sample.len(),
        });
    }
    let (sx, sy) = coordinate_std(sample);
    let h = (sample.len() as f64).powf(-1.0 / 6.0) * sx.min(sy);
    if !(h > 0.0) {
        return Err(Error::InvalidParameter("sample has a constant coordinate".into()));
    }
    Ok(h)
}

/// 20 points on `[0.25, 4] * reference_bandwidth(sample)`.
pub fn default_ladder(sample: &[Point]) -> Result<Vec<f64>> {
    let h = reference_bandwidth(sample)?;
    bandwidth_ladder(DEFAULT_LADDER_SPAN.0 * h, DEFAULT_LADDER_SPAN.1 * h, DEFAULT_LADDER_LEN)
}

fn coordinate_std(sample: &[Point]) -> (f64, f64) {
    let c = sample_covariance(sample);
    (c.0.sqrt(), c.2.sqrt())
}

/// Mean and (xx, xy, yy) moments with divisor `n - 1`.
fn sample_moments(sample: &[Point]) -> ([f64; 2], (f64, f64, f64)) {
    let n = sample.len() as f64;
    let mx = sample.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = sample.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
    for p in sample {
        let (a, b) = (p[0] - mx, p[1] - my);
        xx += a * a;
        xy += a * b;
        yy += b * b;
    }
    let d = n - 1.0;
    ([mx, my], (xx / d, xy / d, yy / d))
}

fn sample_covariance(sample: &[Point]) -> (f64, f64, f64) {
    sample_moments(sample).1
}

/// Nyquist headroom kept by [`ladder_grid`] for the smallest ladder bandwidth.
pub const LADDER_GRID_MARGIN: f64 = 1.5;

/// Grid shared by every ladder point.
///
/// Each axis spans the default extent of the widest bandwidth, widened as far
/// as the smallest bandwidth allows with `pi / spacing = 1.5 / h`. The finer
/// frequency lattice keeps successive differences from jumping as taper
/// rings cross lattice points.
pub fn ladder_grid(
    sample: &[Point],
    ladder: &[f64],
    ratio: f64,
    noise: &NoiseSpec,
    nx: usize,
    ny: usize,
) -> Result<GridSpec> {
    check_ladder(ladder)?;
    let h_min = ladder[0];
    let h_max = ladder[ladder.len() - 1];
    let base = default_grid(sample, BandwidthPair::new(h_max, ratio)?, noise, nx, ny)?;
    let widen = |lo: f64, hi: f64, cells: usize, h: f64| {
        let half = 0.5 * (hi - lo).max(cells as f64 * std::f64::consts::PI * h / LADDER_GRID_MARGIN);
        let mid = 0.5 * (lo + hi);
        (mid - half, mid + half)
    };
    GridSpec::new(
        nx,
        ny,
        widen(base.x_min, base.x_max, nx, h_min * ratio),
        widen(base.y_min, base.y_max, ny, h_min),
    )
}

fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.len() < 3 || !ladder.windows(2).all(|w| w[0] < w[1]) || !(ladder[0] > 0.0) {
        return Err(Error::InvalidParameter(
            "ladder must hold at least 3 strictly increasing positive bandwidths".into(),
        ));
    }
    Ok(())
}

/// Post-processed estimates at every ladder point, evaluated in parallel.
pub fn ladder_estimates(
    sample: &[Point],
    ladder: &[f64],
    ratio: f64,
    noise: &NoiseSpec,
    grid: &GridSpec,
    kernel: &FlatTopKernel,
) -> Result<Vec<DensityGrid>> {
    ladder
        .par_iter()
        .map(|&h| estimate_density(sample, BandwidthPair::new(h, ratio)?, noise, grid, kernel))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub h_opt: f64,
    /// Position of `h_opt` in the ladder.
    pub index: usize,
    pub ladder: Vec<f64>,
    /// `d_curve[i]` is the distance between the estimates at `ladder[i]` and `ladder[i + 1]`.
    pub d_curve: Vec<f64>,
    /// Set when every distance was equal and the smallest bandwidth was returned.
    pub flat: bool,
}

impl BandwidthSelection {
    /// `h,D` rows for every ladder point that has a successor.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "h,D")?;
        for (h, d) in self.ladder.iter().zip(&self.d_curve) {
            writeln!(w, "{h},{d}")?;
        }
        Ok(())
    }
}

/// Index of the smallest value (first on ties) and whether all values are equal.
fn argmin_first(values: &[f64]) -> (usize, bool) {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    let flat = values.iter().all(|&v| v == values[0]);
    (best, flat)
}

/// Minimizer of the successive L2 differences along `ladder`.
pub fn select_bandwidth(
    sample: &[Point],
    ladder: &[f64],
    ratio: f64,
    noise: &NoiseSpec,
    grid: &GridSpec,
    kernel: &FlatTopKernel,
) -> Result<BandwidthSelection> {
    check_ladder(ladder)?;
    let est = ladder_estimates(sample, ladder, ratio, noise, grid, kernel)?;
    let d_curve = est
        .windows(2)
        .map(|w| w[0].l2_distance(&w[1]))
        .collect::<Result<Vec<f64>>>()?;
    let (index, flat) = argmin_first(&d_curve);
    Ok(BandwidthSelection {
        h_opt: ladder[index],
        index,
        ladder: ladder.to_vec(),
        d_curve,
        flat,
    })
}

/// Grid L2 distance between an estimate and the known density.
pub fn imse_oracle(truth: &DensityGrid, estimate: &DensityGrid) -> Result<f64> {
    truth.l2_distance(estimate)
}

/// L2 error against `truth` at every ladder point.
pub fn imse_curve(
    truth: &DensityGrid,
    sample: &[Point],
    ladder: &[f64],
    ratio: f64,
    noise: &NoiseSpec,
    kernel: &FlatTopKernel,
) -> Result<Vec<f64>> {
    check_ladder(ladder)?;
    ladder_estimates(sample, ladder, ratio, noise, truth.spec(), kernel)?
        .iter()
        .map(|e| imse_oracle(truth, e))
        .collect()
}

/// Normal fitted to `sample` after removing the noise covariance.
///
/// Falls back to a diagonal fit when the corrected covariance is not positive
/// definite; each variance is then kept at least 10% of its observed value.
pub fn mock_covariance(sample: &[Point], noise: &NoiseSpec) -> Result<([f64; 2], Covariance, bool)> {
    let (mean, (xx, xy, yy)) = sample_moments(sample);
    let (v1, v2) = noise.variances();
    if let Ok(c) = Covariance::new(xx - v1, xy, yy - v2) {
        return Ok((mean, c, false));
    }
    let c = Covariance::new((xx - v1).max(0.1 * xx), 0.0, (yy - v2).max(0.1 * yy))?;
    Ok((mean, c, true))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockSelection {
    pub h_opt: f64,
    /// Bandwidth selected on each synthetic dataset.
    pub replica_h: Vec<f64>,
    /// Diagonal fallback was used for the mock covariance.
    pub fallback: bool,
}

/// Bandwidth chosen on Gaussian mock datasets resembling `sample`.
///
/// Each replica has the size of `sample`, is drawn from [`mock_covariance`]
/// plus noise, and runs [`select_bandwidth`] on `ladder` with its own grid.
/// The lower median of the replica choices is returned, so the result is
/// always a ladder member.
#[allow(clippy::too_many_arguments)]
pub fn mock_density_bandwidth(
    sample: &[Point],
    ladder: &[f64],
    ratio: f64,
    noise: &NoiseSpec,
    kernel: &FlatTopKernel,
    grid_size: (usize, usize),
    replicas: usize,
    seed: u64,
) -> Result<MockSelection> {
    if sample.len() < 10 {
        return Err(Error::TooFewPoints {
            required: 10,
            actual: sample.len(),
        });
    }
    if replicas == 0 {
        return Err(Error::InvalidParameter("need at least one mock replica".into()));
    }
    check_ladder(ladder)?;
    let (mean, cov, fallback) = mock_covariance(sample, noise)?;
    let root = SeedStream::new(seed);
    let n = sample.len();
    let picks: Vec<Result<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = root.child(r as u64).rng();
            let x = cov.sample(n, &mut rng);
            let e = noise.sample(n, &mut rng);
            let z: Vec<Point> = x
                .iter()
                .zip(&e)
                .map(|(x, e)| [mean[0] + x[0] + e[0], mean[1] + x[1] + e[1]])
                .collect();
            let grid = ladder_grid(&z, ladder, ratio, noise, grid_size.0, grid_size.1)?;
            Ok(select_bandwidth(&z, ladder, ratio, noise, &grid, kernel)?.h_opt)
        })
        .collect();
    let mut replica_h = Vec::with_capacity(replicas);
    for (index, p) in picks.into_iter().enumerate() {
        replica_h.push(p.map_err(|e| Error::Replicate {
            index,
            source: Box::new(e),
        })?);
    }
    let mut sorted = replica_h.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(MockSelection {
        h_opt: sorted[(replicas - 1) / 2],
        replica_h,
        fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelId, ModelSpec};
    use rand::Rng;

    fn shuffled<R: Rng + ?Sized>(sample: &[Point], rng: &mut R) -> Vec<Point> {
        let mut v = sample.to_vec();
        for i in (1..v.len()).rev() {
            v.swap(i, rng.random_range(0..=i));
        }
        v
    }

    #[test]
    fn ladder_examples() {
        let l = bandwidth_ladder(0.01, 1.0, 3).unwrap();
        assert_eq!(l[0], 0.01);
        assert!((l[1] - 0.1).abs() < 1e-15);
        assert_eq!(l[2], 1.0);
        let l = bandwidth_ladder(0.04, 0.16, 5).unwrap();
        for w in l.windows(2) {
            assert!((w[1] / w[0] - 2f64.sqrt()).abs() < 1e-12);
        }
        assert!(bandwidth_ladder(0.1, 0.1, 3).is_err());
        assert!(bandwidth_ladder(0.1, 0.2, 2).is_err());
        assert!(bandwidth_ladder(0.0, 0.2, 4).is_err());
    }

    #[test]
    fn ladder_grid_covers_every_ladder_point() {
        let m = ModelSpec::new(ModelId::Two, 0.1, 300).unwrap();
        let (_, z) = m.gen_data(&mut SeedStream::new(21).rng()).unwrap();
        let noise = m.noise();
        let ratio = BandwidthPair::for_noise(1.0, &noise).unwrap().ratio;
        let ladder = default_ladder(&z).unwrap();
        let g = ladder_grid(&z, &ladder, ratio, &noise, 256, 256).unwrap();
        let h_min = ladder[0];
        assert!(std::f64::consts::PI / g.dx() >= LADDER_GRID_MARGIN / (h_min * ratio) * (1.0 - 1e-12));
        assert!(std::f64::consts::PI / g.dy() >= LADDER_GRID_MARGIN / h_min * (1.0 - 1e-12));
        let base = default_grid(&z, BandwidthPair::new(ladder[19], ratio).unwrap(), &noise, 256, 256).unwrap();
        assert!(g.x_min <= base.x_min && g.x_max >= base.x_max);
        assert!(g.y_min <= base.y_min && g.y_max >= base.y_max);
        let k = FlatTopKernel::default();
        for h in [ladder[0], ladder[19]] {
            estimate_density(&z, BandwidthPair::new(h, ratio).unwrap(), &noise, &g, &k).unwrap();
        }
    }

    #[test]
    fn identical_adjacent_estimates_are_selected() {
        // a constant sample has a real-valued cf, so oversmoothed estimates
        // whose kernel support sits inside the first lattice cell coincide
        let z = vec![[0.0, 0.0]; 20];
        let grid = GridSpec::new(16, 16, (-8.0, 8.0), (-8.0, 8.0)).unwrap();
        let ladder = [0.5, 1.0, 10.0, 20.0];
        let sel = select_bandwidth(&z, &ladder, 1.0, &NoiseSpec::none(), &grid, &FlatTopKernel::default()).unwrap();
        assert_eq!(sel.d_curve[2], 0.0);
        assert_eq!(sel.index, 2);
        assert_eq!(sel.h_opt, 10.0);
        assert!(!sel.flat);
    }

    #[test]
    fn flat_curve_returns_smallest_bandwidth() {
        let z = vec![[0.0, 0.0]; 20];
        let grid = GridSpec::new(16, 16, (-8.0, 8.0), (-8.0, 8.0)).unwrap();
        let ladder = [10.0, 20.0, 40.0];
        let sel = select_bandwidth(&z, &ladder, 1.0, &NoiseSpec::none(), &grid, &FlatTopKernel::default()).unwrap();
        assert!(sel.flat);
        assert_eq!(sel.h_opt, 10.0);
    }

    #[test]
    fn imse_oracle_examples() {
        let spec = GridSpec::new(64, 64, (-6.0, 6.0), (-6.0, 6.0)).unwrap();
        let cov = Covariance::new(1.0, 0.0, 1.0).unwrap();
        let truth = cov.density_grid(spec).unwrap();
        assert_eq!(imse_oracle(&truth, &truth).unwrap(), 0.0);

        // shift by one cell in x, summing directly
        let shifted = DensityGrid::from_fn(spec, |x, y| cov.density(x - spec.dx(), y)).unwrap();
        let scale = 1.0 / (DensityGrid::from_fn(spec, |x, y| cov.density(x, y)).unwrap().mass());
        let mut s = 0.0;
        for iy in 0..64 {
            for ix in 0..64 {
                let a = scale * cov.density(spec.x_center(ix), spec.y_center(iy));
                let b = shifted.get(ix, iy);
                s += (a - b) * (a - b);
            }
        }
        let expect = (s * spec.cell_area()).sqrt();
        assert!((imse_oracle(&truth, &shifted).unwrap() - expect).abs() < 1e-12);

        let other = GridSpec::new(32, 32, (-6.0, 6.0), (-6.0, 6.0)).unwrap();
        assert_eq!(
            imse_oracle(&truth, &cov.density_grid(other).unwrap()).unwrap_err(),
            Error::GridMismatch
        );
    }

    #[test]
    fn d_curve_invariant_under_reordering() {
        let mut rng = SeedStream::new(5).rng();
        let model = ModelSpec::new(ModelId::One, 0.5, 150).unwrap();
        let (_, z) = model.gen_data(&mut rng).unwrap();
        let ladder = bandwidth_ladder(0.2, 0.8, 4).unwrap();
        let noise = model.noise();
        let grid = ladder_grid(&z, &ladder, 1.0, &noise, 64, 64).unwrap();
        let k = FlatTopKernel::default();
        let a = select_bandwidth(&z, &ladder, 1.0, &noise, &grid, &k).unwrap();
        let b = select_bandwidth(&shuffled(&z, &mut rng), &ladder, 1.0, &noise, &grid, &k).unwrap();
        assert_eq!(a.index, b.index);
        for (x, y) in a.d_curve.iter().zip(&b.d_curve) {
            assert!((x - y).abs() < 1e-9 * x.max(1e-12));
        }
        assert!(a.ladder.contains(&a.h_opt));
    }

    #[test]
    fn mock_covariance_falls_back_when_noise_dominates() {
        let mut rng = SeedStream::new(3).rng();
        let z = Covariance::new(0.01, 0.0, 0.01).unwrap().sample(200, &mut rng);
        let (_, c, fallback) = mock_covariance(&z, &NoiseSpec::laplace(0.05, 0.05).unwrap()).unwrap();
        assert!(fallback);
        assert!(c.xx > 0.0 && c.yy > 0.0 && c.xy == 0.0);

        let z = Covariance::new(1.0, 0.5, 1.0).unwrap().sample(2000, &mut rng);
        let (_, c, fallback) = mock_covariance(&z, &NoiseSpec::laplace(0.05, 0.05).unwrap()).unwrap();
        assert!(!fallback);
        assert!((c.xx - 0.95).abs() < 0.1 && (c.xy - 0.5).abs() < 0.1);
    }

    #[test]
    fn mock_bandwidth_small_sample_and_fallback() {
        let z: Vec<Point> = (0..9).map(|i| [i as f64, (i * i) as f64]).collect();
        let noise = NoiseSpec::laplace(0.05, 0.05).unwrap();
        let k = FlatTopKernel::default();
        let ladder = [0.2, 0.4, 0.8];
        assert!(matches!(
            mock_density_bandwidth(&z, &ladder, 1.0, &noise, &k, (32, 32), 3, 0),
            Err(Error::TooFewPoints {
                required: 10,
                actual: 9
            })
        ));

        let mut rng = SeedStream::new(4).rng();
        let z = Covariance::new(0.02, 0.0, 0.02).unwrap().sample(50, &mut rng);
        let noise = NoiseSpec::laplace(0.5, 0.5).unwrap();
        let sel = mock_density_bandwidth(&z, &ladder, 1.0, &noise, &k, (64, 64), 3, 1).unwrap();
        assert!(sel.fallback);
        assert!(sel.h_opt > 0.0 && ladder.contains(&sel.h_opt));
        assert_eq!(sel.replica_h.len(), 3);
    }

    #[test]
    fn d_curve_csv() {
        let sel = BandwidthSelection {
            h_opt: 0.2,
            index: 1,
            ladder: vec![0.1, 0.2, 0.4],
            d_curve: vec![0.5, 0.25],
            flat: false,
        };
        let mut out = Vec::new();
        sel.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "h,D\n0.1,0.5\n0.2,0.25\n");
    }
}
