//! Spectral deconvolution density estimator.
//!
//! The empirical characteristic function of the noisy sample is divided by
//! the noise characteristic function, damped by a flat-top kernel, and
//! inverted on the FFT lattice of a [`GridSpec`]. Only frequencies inside
//! the kernel support are ever evaluated.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DensityGrid, GridSpec};
use crate::kernel::FlatTopKernel;
use crate::noise::NoiseSpec;
use crate::Point;

/// Maximum tolerated `max|imag| / max|real|` after the inverse transform.
pub const IMAG_RESIDUE_TOL: f64 = 1e-8;

/// Cells below this fraction of the maximum are zeroed by [`postprocess`].
pub const THRESHOLD_FRACTION: f64 = 1e-3;

/// Base bandwidth plus the `x`-to-`y` bandwidth ratio.
///
/// The effective bandwidths are `h * ratio` along `x` and `h` along `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthPair {
    pub h: f64,
    pub ratio: f64,
}

impl BandwidthPair {
    pub fn new(h: f64, ratio: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0 && ratio.is_finite() && ratio > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth and ratio must be positive, got h={h}, ratio={ratio}"
            )));
        }
        Ok(Self { h, ratio })
    }

    pub fn isotropic(h: f64) -> Result<Self> {
        Self::new(h, 1.0)
    }

    /// Ratio `s2 / s1` of the noise standard deviations, 1 without noise.
    pub fn for_noise(h: f64, noise: &NoiseSpec) -> Result<Self> {
        let (s1, s2) = noise.std_devs();
        let ratio = if noise.is_none() || s1 == s2 { 1.0 } else { s2 / s1 };
        Self::new(h, ratio)
    }

    /// Same ratio, different base bandwidth.
    pub fn with_h(self, h: f64) -> Result<Self> {
        Self::new(h, self.ratio)
    }

    pub fn hx(&self) -> f64 {
        self.h * self.ratio
    }

    pub fn hy(&self) -> f64 {
        self.h
    }
}

/// `n^-1 sum exp(i <t, Z_k>)`.
pub fn empirical_cf(sample: &[Point], t: (f64, f64)) -> Result<Complex64> {
    if sample.is_empty() {
        return Err(Error::TooFewPoints { required: 1, actual: 0 });
    }
    let sum: Complex64 = sample
        .iter()
        .map(|z| Complex64::from_polar(1.0, t.0 * z[0] + t.1 * z[1]))
        .sum();
    Ok(sum / sample.len() as f64)
}

/// Grid enclosing the sample, padded by `4 * (bandwidth + noise sd)` per side.
pub fn default_grid(sample: &[Point], bw: BandwidthPair, noise: &NoiseSpec, nx: usize, ny: usize) -> Result<GridSpec> {
    if sample.is_empty() {
        return Err(Error::TooFewPoints { required: 1, actual: 0 });
    }
    let (s1, s2) = noise.std_devs();
    let axis = |k: usize, pad: f64| {
        let (lo, hi) = sample.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p[k]), hi.max(p[k]))
        });
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo) + pad;
        (mid - half, mid + half)
    };
    GridSpec::new(nx, ny, axis(0, 4.0 * (bw.hx() + s1)), axis(1, 4.0 * (bw.hy() + s2)))
}

/// Frequency lattice of one grid axis restricted to the kernel support.
#[derive(Debug, Clone, Copy)]
struct AxisBand {
    /// Lattice spacing `2 pi / extent`.
    dt: f64,
    /// Highest active index; active frequencies are `k * dt`, `|k| <= kmax`.
    kmax: usize,
    /// Cell-center coordinate of index 0.
    origin: f64,
    n: usize,
}

impl AxisBand {
    fn new(axis: char, n: usize, lo: f64, hi: f64, h: f64) -> Result<Self> {
        let extent = hi - lo;
        let d = extent / n as f64;
        // kernel support |h t| < 1 must fit below Nyquist pi / d
        if PI / d < 1.0 / h {
            let required = (extent / (PI * h)).ceil().max(2.0) as usize;
            return Err(Error::Nyquist {
                axis,
                bandwidth: h,
                required: required.next_power_of_two(),
                actual: n,
            });
        }
        let dt = 2.0 * PI / extent;
        let kmax = ((1.0 / (h * dt)).ceil() as usize).saturating_sub(1);
        Ok(Self {
            dt,
            kmax: kmax.min(n / 2 - 1),
            origin: lo + 0.5 * d,
            n,
        })
    }

    fn width(&self) -> usize {
        2 * self.kmax + 1
    }

    fn freq(&self, k: isize) -> f64 {
        k as f64 * self.dt
    }

    fn wrap(&self, k: isize) -> usize {
        k.rem_euclid(self.n as isize) as usize
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

/// `e^{i k w}` for `k = 0..=kmax`, by repeated multiplication re-anchored
/// every 32 steps.
fn phase_ladder(w: f64, kmax: usize, out: &mut [Complex64]) {
    let step = Complex64::from_polar(1.0, w);
    let mut cur = Complex64::new(1.0, 0.0);
    for (k, slot) in out.iter_mut().enumerate().take(kmax + 1) {
        if k % 32 == 0 {
            cur = Complex64::from_polar(1.0, k as f64 * w);
        }
        *slot = cur;
        cur *= step;
    }
}

/// Empirical characteristic function on the half lattice
/// `kx in 0..=kx_max`, `ky in -ky_max..=ky_max`, stored `[kx][ky + ky_max]`.
fn ecf_half_lattice(sample: &[Point], bx: &AxisBand, by: &AxisBand) -> Vec<Complex64> {
    let wy = by.width();
    let mut acc = vec![Complex64::new(0.0, 0.0); (bx.kmax + 1) * wy];
    let mut px = vec![Complex64::new(0.0, 0.0); bx.kmax + 1];
    let mut py_pos = vec![Complex64::new(0.0, 0.0); by.kmax + 1];
    let mut py = vec![Complex64::new(0.0, 0.0); wy];
    for z in sample {
        phase_ladder(bx.dt * z[0], bx.kmax, &mut px);
        phase_ladder(by.dt * z[1], by.kmax, &mut py_pos);
        for k in 0..=by.kmax {
            py[by.kmax + k] = py_pos[k];
            py[by.kmax - k] = py_pos[k].conj();
        }
        for (row, &p) in acc.chunks_exact_mut(wy).zip(&px) {
            for (a, &q) in row.iter_mut().zip(&py) {
                *a += p * q;
            }
        }
    }
    let inv = 1.0 / sample.len() as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    acc
}

/// Raw deconvolution density estimate on `grid`.
///
/// The result integrates to one on the grid (up to rounding) but may be
/// negative; pass it through [`postprocess`] before sampling.
pub fn deconv_density(
    sample: &[Point],
    bw: BandwidthPair,
    noise: &NoiseSpec,
    grid: &GridSpec,
    kernel: &FlatTopKernel,
) -> Result<DensityGrid> {
    if sample.len() < 2 {
        return Err(Error::TooFewPoints {
            required: 2,
            actual: sample.len(),
        });
    }
    grid.validate()?;
    let bx = AxisBand::new('x', grid.nx, grid.x_min, grid.x_max, bw.hx())?;
    let by = AxisBand::new('y', grid.ny, grid.y_min, grid.y_max, bw.hy())?;

    // Spectral weights phi_K(h t) / psi(t) per axis, with the grid-origin phase
    // and the 1 / (Lx Ly) quadrature factor folded in.
    let axis_weights = |band: &AxisBand, h: f64, axis: usize| -> Result<Vec<Complex64>> {
        (0..=band.kmax)
            .map(|k| {
                let t = band.freq(k as isize);
                let psi = noise.cf_axis(axis, t);
                if psi < 1e-300 {
                    return Err(Error::CfUnderflow {
                        t1: if axis == 0 { t } else { 0.0 },
                        t2: if axis == 1 { t } else { 0.0 },
                    });
                }
                Ok(Complex64::from_polar(kernel.cf_1d(h * t) / psi, -t * band.origin))
            })
            .collect()
    };
    let wx = axis_weights(&bx, bw.hx(), 0)?;
    let wy = axis_weights(&by, bw.hy(), 1)?;
    let weight_y = |m: isize| {
        if m >= 0 {
            wy[m as usize]
        } else {
            wy[(-m) as usize].conj()
        }
    };
    let norm = 1.0 / (grid.width() * grid.height());

    let ecf = ecf_half_lattice(sample, &bx, &by);
    let ky = by.kmax as isize;
    let band_y = by.width();

    // Column transforms along y for kx >= 0; kx < 0 follow by conjugate symmetry.
    let col_fft = forward_plan(grid.ny);
    let mut cols = vec![Complex64::new(0.0, 0.0); (bx.kmax + 1) * grid.ny];
    for (kx, col) in cols.chunks_exact_mut(grid.ny).enumerate() {
        let row = &ecf[kx * band_y..(kx + 1) * band_y];
        for m in -ky..=ky {
            col[by.wrap(m)] = row[(m + ky) as usize] * wx[kx] * weight_y(m) * norm;
        }
        col_fft.process(col);
    }

    // Row transforms along x; each output row is real.
    let row_fft = forward_plan(grid.nx);
    let mut values = vec![0.0; grid.len()];
    let mut line = vec![Complex64::new(0.0, 0.0); grid.nx];
    let kx_max = bx.kmax as isize;
    let (mut max_re, mut max_im) = (0.0f64, 0.0f64);
    for iy in 0..grid.ny {
        line.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for k in 0..=kx_max {
            let g = cols[k as usize * grid.ny + iy];
            line[bx.wrap(k)] = g;
            if k > 0 {
                line[bx.wrap(-k)] = g.conj();
            }
        }
        row_fft.process(&mut line);
        let out = &mut values[iy * grid.nx..(iy + 1) * grid.nx];
        for (v, c) in out.iter_mut().zip(&line) {
            *v = c.re;
            max_re = max_re.max(c.re.abs());
            max_im = max_im.max(c.im.abs());
        }
    }
    if max_re > 0.0 && max_im > IMAG_RESIDUE_TOL * max_re {
        return Err(Error::ImaginaryResidue {
            residue: max_im / max_re,
        });
    }
    DensityGrid::raw(*grid, values)
}

/// Zeroes every cell below `max / 1000` and renormalizes to unit mass.
pub fn postprocess(raw: DensityGrid) -> Result<DensityGrid> {
    let max = raw.max();
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::DegenerateDensity { max });
    }
    let cut = max * THRESHOLD_FRACTION;
    let spec = *raw.spec();
    let mut values = raw.values().to_vec();
    for v in values.iter_mut() {
        if *v < cut {
            *v = 0.0;
        }
    }
    let mass = values.iter().sum::<f64>() * spec.cell_area();
    values.iter_mut().for_each(|v| *v /= mass);
    Ok(DensityGrid::raw(spec, values)?.into_processed())
}

/// [`deconv_density`] followed by [`postprocess`].
pub fn estimate_density(
    sample: &[Point],
    bw: BandwidthPair,
    noise: &NoiseSpec,
    grid: &GridSpec,
    kernel: &FlatTopKernel,
) -> Result<DensityGrid> {
    postprocess(deconv_density(sample, bw, noise, grid, kernel)?)
}
