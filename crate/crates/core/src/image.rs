//! Square images stored in the grid vectorization order.

use num_complex::Complex64;

use crate::error::{MoccaError, Result};
use crate::lattice::{CenteredGrid, GridIndex};

/// Complex `n`×`n` image (k-space data, coil images, sensitivities, `m̃`).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    n: usize,
    values: Vec<Complex64>,
}

impl ComplexImage {
    pub fn zeros(n: usize) -> Self {
        Self { n, values: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    pub fn from_vec(n: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(MoccaError::DimensionMismatch(format!(
                "expected {} samples for a {n}x{n} image, got {}",
                n * n,
                values.len()
            )));
        }
        Ok(Self { n, values })
    }

    /// Builds an image by evaluating `f` at every grid point.
    pub fn from_fn(n: usize, mut f: impl FnMut(GridIndex) -> Complex64) -> Self {
        let grid = CenteredGrid::new(n.max(1)).expect("positive size");
        let values = grid.enumerate().map(&mut f).collect();
        Self { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> CenteredGrid {
        CenteredGrid::new(self.n).expect("image size is positive")
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    #[inline]
    pub fn get(&self, idx: GridIndex) -> Complex64 {
        self.values[self.grid().position(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: GridIndex, v: Complex64) {
        let pos = self.grid().position(idx);
        self.values[pos] = v;
    }

    pub fn norm2(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Pixelwise modulus.
    pub fn abs(&self) -> RealImage {
        RealImage { n: self.n, values: self.values.iter().map(|v| v.norm()).collect() }
    }

    pub fn scale(&mut self, a: Complex64) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }

    /// `max |self - other|` over all pixels.
    pub fn max_abs_diff(&self, other: &ComplexImage) -> f64 {
        assert_eq!(self.n, other.n, "image sizes differ");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Real `n`×`n` image (final magnitude images, sos fields, error maps).
#[derive(Clone, Debug, PartialEq)]
pub struct RealImage {
    n: usize,
    values: Vec<f64>,
}

impl RealImage {
    pub fn zeros(n: usize) -> Self {
        Self { n, values: vec![0.0; n * n] }
    }

    pub fn from_vec(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(MoccaError::DimensionMismatch(format!(
                "expected {} pixels for a {n}x{n} image, got {}",
                n * n,
                values.len()
            )));
        }
        Ok(Self { n, values })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(GridIndex) -> f64) -> Self {
        let grid = CenteredGrid::new(n.max(1)).expect("positive size");
        let values = grid.enumerate().map(&mut f).collect();
        Self { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> CenteredGrid {
        CenteredGrid::new(self.n).expect("image size is positive")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, idx: GridIndex) -> f64 {
        self.values[self.grid().position(idx)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn norm2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rescales to unit 2-norm.
    pub fn normalized(&self) -> Result<RealImage> {
        let norm = self.norm2();
        if norm == 0.0 {
            return Err(MoccaError::ZeroImage);
        }
        Ok(RealImage { n: self.n, values: self.values.iter().map(|v| v / norm).collect() })
    }

    pub fn to_complex(&self) -> ComplexImage {
        ComplexImage {
            n: self.n,
            values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}
