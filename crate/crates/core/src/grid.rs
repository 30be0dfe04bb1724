//! Rectangular grids and densities stored on them.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layout of a rectangular grid of `nx * ny` cells.
///
/// Both cell counts are powers of two so the grid doubles as an FFT lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, x: (f64, f64), y: (f64, f64)) -> Result<Self> {
        let spec = Self {
            nx,
            ny,
            x_min: x.0,
            x_max: x.1,
            y_min: y.0,
            y_max: y.1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("nx", self.nx), ("ny", self.ny)] {
            if n < 2 || !n.is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "{name} must be a power of two >= 2, got {n}"
                )));
            }
        }
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(Error::InvalidGrid(format!(
                "extent [{}, {}] x [{}, {}] is empty or not finite",
                self.x_min, self.x_max, self.y_min, self.y_max
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn dx(&self) -> f64 {
        self.width() / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.height() / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_center(&self, ix: usize) -> f64 {
        self.x_min + (ix as f64 + 0.5) * self.dx()
    }

    pub fn y_center(&self, iy: usize) -> f64 {
        self.y_min + (iy as f64 + 0.5) * self.dy()
    }

    /// Same layout translated by `(a, b)`.
    pub fn shifted(&self, a: f64, b: f64) -> Self {
        Self {
            x_min: self.x_min + a,
            x_max: self.x_max + a,
            y_min: self.y_min + b,
            y_max: self.y_max + b,
            ..*self
        }
    }
}

/// Density values on a grid, stored row-major with `y` as the row index:
/// cell `(ix, iy)` lives at `values[iy * nx + ix]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    spec: GridSpec,
    values: Vec<f64>,
    processed: bool,
}

impl DensityGrid {
    /// Wraps raw (possibly negative) values.
    pub fn raw(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                spec.len(),
                values.len()
            )));
        }
        Ok(Self {
            spec,
            values,
            processed: false,
        })
    }

    /// Evaluates `f` at every cell center.
    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        spec.validate()?;
        let mut values = Vec::with_capacity(spec.len());
        for iy in 0..spec.ny {
            let y = spec.y_center(iy);
            for ix in 0..spec.nx {
                values.push(f(spec.x_center(ix), y));
            }
        }
        Self::raw(spec, values)
    }

    /// Rescales a nonnegative grid to unit mass and marks it as a valid density.
    pub fn normalized(mut self) -> Result<Self> {
        if self.values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidGrid(
                "cannot normalize a grid with negative or non-finite values".into(),
            ));
        }
        let mass = self.mass();
        if mass <= 0.0 {
            return Err(Error::DegenerateDensity { max: 0.0 });
        }
        self.values.iter_mut().for_each(|v| *v /= mass);
        self.processed = true;
        Ok(self)
    }

    pub(crate) fn into_processed(mut self) -> Self {
        self.processed = true;
        self
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_processed(&self) -> bool {
        self.processed
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.spec.nx + ix]
    }

    /// `sum(values) * cell_area`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_area()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Grid L2 norm.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.spec.cell_area()).sqrt()
    }

    /// Grid L2 distance to another density on the same layout.
    pub fn l2_distance(&self, other: &DensityGrid) -> Result<f64> {
        self.check_same_layout(other)?;
        let ss: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((ss * self.spec.cell_area()).sqrt())
    }

    /// Grid L1 distance to another density on the same layout.
    pub fn l1_distance(&self, other: &DensityGrid) -> Result<f64> {
        self.check_same_layout(other)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum();
        Ok(s * self.spec.cell_area())
    }

    fn check_same_layout(&self, other: &DensityGrid) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Writes `x,y,value` rows (cell centers) with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,y,value")?;
        for iy in 0..self.spec.ny {
            let y = self.spec.y_center(iy);
            for ix in 0..self.spec.nx {
                writeln!(w, "{},{},{}", self.spec.x_center(ix), y, self.get(ix, iy))?;
            }
        }
        Ok(())
    }

    /// Binary dump: `nx`, `ny` as u64, then `x_min, x_max, y_min, y_max`
    /// and the row-major values, all little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&(self.spec.nx as u64).to_le_bytes())?;
        w.write_all(&(self.spec.ny as u64).to_le_bytes())?;
        for v in [self.spec.x_min, self.spec.x_max, self.spec.y_min, self.spec.y_max] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump produced by [`DensityGrid::write_binary`]. The result is
    /// flagged raw; call [`DensityGrid::normalized`] to re-validate it.
    pub fn read_binary<R: Read>(mut r: R) -> io::Result<Self> {
        let mut b8 = [0u8; 8];
        let mut next_u64 = |r: &mut R| -> io::Result<u64> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let nx = next_u64(&mut r)? as usize;
        let ny = next_u64(&mut r)? as usize;
        let mut ext = [0.0; 4];
        for e in ext.iter_mut() {
            *e = f64::from_bits(next_u64(&mut r)?);
        }
        let spec = GridSpec::new(nx, ny, (ext[0], ext[1]), (ext[2], ext[3]))
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
        let mut values = Vec::with_capacity(spec.len());
        for _ in 0..spec.len() {
            values.push(f64::from_bits(next_u64(&mut r)?));
        }
        Self::raw(spec, values).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
    }
}
