//! Centered 2-D DFT and synthesis of sensitivities from their k-space support.
//!
//! The forward transform is `y_ν = Σ_n x_n ω^{ν·n}` with `ω = e^{-2πi/N}` and
//! both `ν` and `n` running over the centered grid. It is computed with a
//! standard FFT between two checkerboard sign flips, so the cost is
//! `O(N² log N)`.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{MoccaError, Result};
use crate::image::ComplexImage;
use crate::lattice::{CenteredGrid, GridIndex};

/// Coefficients of one trigonometric polynomial on the odd support grid `Λ_L`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientVector {
    l: usize,
    values: Vec<Complex64>,
}

impl CoefficientVector {
    pub fn new(l: usize, values: Vec<Complex64>) -> Result<Self> {
        if l % 2 != 1 {
            return Err(MoccaError::InvalidArgument(format!("support size L must be odd, got {l}")));
        }
        if values.len() != l * l {
            return Err(MoccaError::DimensionMismatch(format!(
                "support {l}x{l} needs {} coefficients, got {}",
                l * l,
                values.len()
            )));
        }
        Ok(Self { l, values })
    }

    pub fn zeros(l: usize) -> Result<Self> {
        Self::new(l, vec![Complex64::new(0.0, 0.0); l * l])
    }

    /// Unit coefficient at `r`, zero elsewhere.
    pub fn impulse(l: usize, r: GridIndex) -> Result<Self> {
        let mut c = Self::zeros(l)?;
        let grid = c.grid();
        if !grid.contains(r) {
            return Err(MoccaError::InvalidArgument(format!("{r:?} is outside the {l}x{l} support")));
        }
        c.values[grid.position(r)] = Complex64::new(1.0, 0.0);
        Ok(c)
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn grid(&self) -> CenteredGrid {
        CenteredGrid::new(self.l).expect("odd support is positive")
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn get(&self, r: GridIndex) -> Complex64 {
        self.values[self.grid().position(r)]
    }
}

/// Reusable forward/inverse plans for one image size. Plans are shared
/// behind `Arc`, so a single instance may serve several threads.
#[derive(Clone)]
pub struct CenteredFft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CenteredFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CenteredFft").field("n", &self.n).finish()
    }
}

impl CenteredFft {
    pub fn new(n: usize) -> Result<Self> {
        CenteredGrid::even(n)?;
        let mut planner = FftPlanner::new();
        Ok(Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `y_ν = Σ_n x_n ω^{ν·n}`, in place.
    pub fn forward_in_place(&self, data: &mut [Complex64]) {
        self.transform(data, &*self.forward);
    }

    /// Exact inverse of [`CenteredFft::forward_in_place`], including `1/N²`.
    pub fn inverse_in_place(&self, data: &mut [Complex64]) {
        self.transform(data, &*self.inverse);
        let scale = 1.0 / (self.n * self.n) as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    /// Inverse transform without the `1/N²` factor, i.e. `N² F⁻¹`.
    pub fn inverse_unscaled_in_place(&self, data: &mut [Complex64]) {
        self.transform(data, &*self.inverse);
    }

    pub fn forward(&self, x: &ComplexImage) -> Result<ComplexImage> {
        self.check(x)?;
        let mut out = x.clone();
        self.forward_in_place(out.values_mut());
        Ok(out)
    }

    pub fn inverse(&self, y: &ComplexImage) -> Result<ComplexImage> {
        self.check(y)?;
        let mut out = y.clone();
        self.inverse_in_place(out.values_mut());
        Ok(out)
    }

    fn check(&self, x: &ComplexImage) -> Result<()> {
        if x.n() != self.n {
            return Err(MoccaError::DimensionMismatch(format!(
                "transform planned for N={}, image has N={}",
                self.n,
                x.n()
            )));
        }
        Ok(())
    }

    /// Unnormalized transform without the sign flips, leaving the result
    /// transposed: on return `out[q2 + N q1]` holds frequency `(q1, q2)`.
    /// `data` is used as workspace.
    pub(crate) fn forward_raw_transposed(&self, data: &mut [Complex64], out: &mut [Complex64]) {
        self.raw_transposed(data, out, &*self.forward);
    }

    /// Inverse of [`Self::forward_raw_transposed`] up to the factor `N²`.
    pub(crate) fn inverse_raw_from_transposed(&self, data: &mut [Complex64], out: &mut [Complex64]) {
        self.raw_transposed(data, out, &*self.inverse);
    }

    fn raw_transposed(&self, data: &mut [Complex64], out: &mut [Complex64], fft: &dyn Fft<f64>) {
        let n = self.n;
        assert!(data.len() == n * n && out.len() == n * n, "buffer does not match planned size");
        WORKSPACE.with(|cell| {
            let mut ws = cell.borrow_mut();
            let scratch = &mut ws.1;
            scratch.resize(fft.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
            fft.process_with_scratch(data, scratch);
            transpose(data, out, n);
            fft.process_with_scratch(out, scratch);
        });
    }

    /// With `h = N/2`, `ω^{(q-h)(p-h)} = (-1)^{p+q+h} ω^{qp}` per axis, so the
    /// centered transform is a standard one between two checkerboard sign
    /// flips; the `(-1)^h` factors of both axes cancel.
    fn transform(&self, data: &mut [Complex64], fft: &dyn Fft<f64>) {
        let n = self.n;
        assert_eq!(data.len(), n * n, "buffer does not match planned size");
        WORKSPACE.with(|cell| {
            let mut ws = cell.borrow_mut();
            let (buf, scratch) = &mut *ws;
            buf.resize(n * n, Complex64::new(0.0, 0.0));
            scratch.resize(fft.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
            for (p, (b, v)) in buf.iter_mut().zip(data.iter()).enumerate() {
                *b = if checker(p, n) { -*v } else { *v };
            }
            fft.process_with_scratch(buf, scratch);
            transpose(buf, data, n);
            fft.process_with_scratch(data, scratch);
            transpose(data, buf, n);
            for (p, (v, b)) in data.iter_mut().zip(buf.iter()).enumerate() {
                *v = if checker(p, n) { -*b } else { *b };
            }
        });
    }
}

thread_local! {
    static WORKSPACE: RefCell<(Vec<Complex64>, Vec<Complex64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// True where `(-1)^{p1+p2} = -1` for storage position `p = p1 + N p2`.
#[inline]
pub(crate) fn checker(p: usize, n: usize) -> bool {
    (p % n + p / n) % 2 == 1
}

/// Tiled transpose of a column-major `n`×`n` buffer.
fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    const TILE: usize = 8;
    for jb in (0..n).step_by(TILE) {
        for ib in (0..n).step_by(TILE) {
            for j in jb..(jb + TILE).min(n) {
                for i in ib..(ib + TILE).min(n) {
                    dst[j + n * i] = src[i + n * j];
                }
            }
        }
    }
}

/// Centered forward DFT of an even-sized image.
pub fn dft2_centered(x: &ComplexImage) -> Result<ComplexImage> {
    CenteredFft::new(x.n())?.forward(x)
}

/// Centered inverse DFT (with the `1/N²` factor).
pub fn idft2_centered(y: &ComplexImage) -> Result<ComplexImage> {
    CenteredFft::new(y.n())?.inverse(y)
}

/// Evaluates `s_n = Σ_{r∈Λ_L} c_r ω^{-r·n}` on the `n`×`n` grid by zero
/// extension and one inverse FFT.
pub fn synthesize_from_support(c: &CoefficientVector, n: usize) -> Result<ComplexImage> {
    synthesize_with(&CenteredFft::new(n)?, c)
}

pub(crate) fn synthesize_with(fft: &CenteredFft, c: &CoefficientVector) -> Result<ComplexImage> {
    let n = fft.n();
    if c.l() > n {
        return Err(MoccaError::InvalidArgument(format!(
            "support size L={} exceeds image size N={n}",
            c.l()
        )));
    }
    let mut ext = ComplexImage::zeros(n);
    for (r, &v) in c.grid().enumerate().zip(c.values()) {
        ext.set(r, v);
    }
    fft.inverse_unscaled_in_place(ext.values_mut());
    Ok(ext)
}
