//! Synthetic data that satisfy the discrete model exactly.
//!
//! Coil data are `y_j = F(m ∘ s_j)` with `s_j` a trigonometric polynomial on
//! `Λ_L`, optionally plus complex white noise. Everything is driven by a
//! ChaCha20 generator seeded from a `u64`, with separate streams for the
//! coefficients, the magnetization and the noise, so fixtures can be
//! reproduced bit for bit on any platform.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::calibration::{KSpaceStack, SensitivityCoefficients};
use crate::error::{MoccaError, Result};
use crate::fourier::{synthesize_with, CenteredFft, CoefficientVector};
use crate::image::{ComplexImage, RealImage};
use crate::lattice::{CenteredGrid, GridIndex};
use crate::sampling::{PatternKind, SamplingPattern};

const STREAM_COEFFICIENTS: u64 = 0;
const STREAM_MAGNETIZATION: u64 = 1;
const STREAM_NOISE: u64 = 2;

/// Redraws allowed before giving up.
pub const MAX_RETRIES: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MagnetizationKind {
    /// Every pixel nonzero: modulus in `[0.25, 1.25)`, uniform phase.
    DenseRandom,
    /// Real nonnegative ellipses on a zero background.
    Piecewise,
    /// Each pixel nonzero with the given probability; complex Gaussian values.
    Sparse(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhantomSpec {
    pub n: usize,
    pub coils: usize,
    /// `L`, odd.
    pub support: usize,
    pub seed: u64,
    pub magnetization: MagnetizationKind,
    /// Standard deviation of the complex k-space noise.
    pub noise: f64,
}

impl PhantomSpec {
    pub fn new(n: usize, coils: usize, support: usize, seed: u64) -> Self {
        Self { n, coils, support, seed, magnetization: MagnetizationKind::DenseRandom, noise: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        CenteredGrid::even(self.n)?;
        CenteredGrid::odd(self.support)?;
        if self.support > self.n {
            return Err(MoccaError::InvalidArgument(format!("L={} exceeds N={}", self.support, self.n)));
        }
        if self.coils < 2 {
            return Err(MoccaError::InvalidArgument(format!("need at least two coils, got {}", self.coils)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(MoccaError::InvalidArgument(format!("noise level {} is invalid", self.noise)));
        }
        if let MagnetizationKind::Sparse(f) = self.magnetization {
            if !(f > 0.0 && f <= 1.0) {
                return Err(MoccaError::InvalidArgument(format!("support fraction {f} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Seeded source of uniform and complex Gaussian numbers.
///
/// Uniforms are `(u64 >> 11) · 2⁻⁵³`; Gaussians use Box-Muller on two
/// uniforms, and a complex sample is `(z0 + i z1)/√2`, so its expected
/// squared modulus is one.
pub struct PhantomRng {
    rng: ChaCha20Rng,
}

impl PhantomRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&seed.to_le_bytes());
        let mut rng = ChaCha20Rng::from_seed(bytes);
        rng.set_stream(stream);
        Self { rng }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn complex_gaussian(&mut self) -> Complex64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        Complex64::new(r * c, r * s) / 2f64.sqrt()
    }
}

/// True if all four boundary rows and columns of the support carry a
/// nonzero coefficient, i.e. the polynomial has full degree.
pub fn boundary_sums_positive(c: &CoefficientVector) -> bool {
    boundary_sums(c).iter().all(|&s| s > 0.0)
}

/// `Σ|c|` over the rows `r1 = ±n` and the columns `r2 = ±n` of `Λ_L`.
pub fn boundary_sums(c: &CoefficientVector) -> [f64; 4] {
    let grid = c.grid();
    let h = grid.max();
    let mut sums = [0.0; 4];
    for (r, v) in grid.enumerate().zip(c.values()) {
        let a = v.norm();
        if r.n1 == h {
            sums[0] += a;
        }
        if r.n1 == -h {
            sums[1] += a;
        }
        if r.n2 == h {
            sums[2] += a;
        }
        if r.n2 == -h {
            sums[3] += a;
        }
    }
    sums
}

/// Complex Gaussian coefficients of unit stacked norm whose polynomials all
/// have full degree.
pub fn random_coefficients(spec: &PhantomSpec) -> Result<SensitivityCoefficients> {
    spec.validate()?;
    let mut rng = PhantomRng::new(spec.seed, STREAM_COEFFICIENTS);
    let l2 = spec.support * spec.support;
    for _ in 0..MAX_RETRIES {
        let mut stacked: Vec<Complex64> = (0..l2 * spec.coils).map(|_| rng.complex_gaussian()).collect();
        let norm = stacked.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        stacked.iter_mut().for_each(|v| *v /= norm);
        let coeffs = SensitivityCoefficients::from_stacked(spec.support, &stacked)?;
        if coeffs.coils().iter().all(boundary_sums_positive) {
            return Ok(coeffs);
        }
    }
    Err(MoccaError::RetriesExhausted { what: "coefficients of full degree".into(), attempts: MAX_RETRIES })
}

/// Rank of `(ω^{-n·ℓ})` for `n` in the support of `m` and `ℓ ∈ Λ_{2L-1}`.
pub fn support_rank(m: &ComplexImage, support: usize) -> usize {
    let n = m.n();
    let big = CenteredGrid::new(2 * support - 1).expect("positive");
    let rows: Vec<GridIndex> = m
        .grid()
        .enumerate()
        .zip(m.values())
        .filter(|(_, v)| v.norm() > 0.0)
        .map(|(i, _)| i)
        .collect();
    if rows.is_empty() {
        return 0;
    }
    let cols: Vec<GridIndex> = big.enumerate().collect();
    let w = 2.0 * PI / n as f64;
    let v = DMatrix::from_fn(rows.len(), cols.len(), |i, k| {
        let e = (rows[i].n1 * cols[k].n1 + rows[i].n2 * cols[k].n2).rem_euclid(n as i64);
        Complex64::from_polar(1.0, w * e as f64)
    });
    let sv = v.singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    let tol = rows.len().max(cols.len()) as f64 * f64::EPSILON * top;
    sv.iter().filter(|&&s| s > tol).count()
}

fn covers_center(m: &ComplexImage, size: usize) -> bool {
    CenteredGrid::new(size).expect("positive").enumerate().all(|i| m.get(i).norm() > 0.0)
}

fn draw_magnetization(spec: &PhantomSpec, rng: &mut PhantomRng) -> ComplexImage {
    let n = spec.n;
    match spec.magnetization {
        MagnetizationKind::DenseRandom => ComplexImage::from_fn(n, |_| {
            let r = 0.25 + rng.uniform();
            Complex64::from_polar(r, 2.0 * PI * rng.uniform())
        }),
        MagnetizationKind::Sparse(fraction) => ComplexImage::from_fn(n, |_| {
            let keep = rng.uniform() < fraction;
            let v = rng.complex_gaussian();
            if keep {
                v
            } else {
                Complex64::new(0.0, 0.0)
            }
        }),
        MagnetizationKind::Piecewise => {
            let half = n as f64 / 2.0;
            // outer body, then a few inner structures drawn on top
            let mut shapes = vec![(0.0, 0.0, half * (0.7 + 0.2 * rng.uniform()), half * (0.7 + 0.2 * rng.uniform()), 0.3 + 0.2 * rng.uniform())];
            let extra = 3 + (rng.uniform() * 3.0) as usize;
            for _ in 0..extra {
                let cx = (rng.uniform() - 0.5) * half;
                let cy = (rng.uniform() - 0.5) * half;
                let ax = half * (0.08 + 0.2 * rng.uniform());
                let ay = half * (0.08 + 0.2 * rng.uniform());
                shapes.push((cx, cy, ax, ay, 0.2 + 0.8 * rng.uniform()));
            }
            ComplexImage::from_fn(n, |i| {
                let (x, y) = (i.n1 as f64, i.n2 as f64);
                let mut v = 0.0;
                for &(cx, cy, ax, ay, val) in &shapes {
                    if ((x - cx) / ax).powi(2) + ((y - cy) / ay).powi(2) <= 1.0 {
                        v = val;
                    }
                }
                Complex64::new(v, 0.0)
            })
        }
    }
}

/// Seeded magnetization. For kinds that leave pixels empty, the support is
/// checked to make `(ω^{-n·ℓ})_{n, ℓ∈Λ_{2L-1}}` of full rank `(2L-1)²` and
/// the image is redrawn otherwise.
pub fn random_magnetization(spec: &PhantomSpec) -> Result<ComplexImage> {
    spec.validate()?;
    let mut rng = PhantomRng::new(spec.seed, STREAM_MAGNETIZATION);
    let size = 2 * spec.support - 1;
    let needed = size * size;
    for _ in 0..MAX_RETRIES {
        let m = draw_magnetization(spec, &mut rng);
        if spec.magnetization == MagnetizationKind::DenseRandom
            || (size <= spec.n && covers_center(&m, size))
            || support_rank(&m, spec.support) == needed
        {
            return Ok(m);
        }
    }
    Err(MoccaError::RetriesExhausted { what: format!("magnetization with support rank {needed}"), attempts: MAX_RETRIES })
}

/// Coil images `m ∘ s_j` with the sensitivities synthesized from `coeffs`.
pub fn coil_images(m: &ComplexImage, coeffs: &SensitivityCoefficients) -> Result<Vec<ComplexImage>> {
    let fft = CenteredFft::new(m.n())?;
    coeffs
        .coils()
        .iter()
        .map(|c| {
            let mut img = synthesize_with(&fft, c)?;
            for (v, x) in img.values_mut().iter_mut().zip(m.values()) {
                *v *= x;
            }
            Ok(img)
        })
        .collect()
}

/// `y_j = F(m ∘ s_j) + noise · w_j` with `w_j` seeded complex white noise.
pub fn forward_model(m: &ComplexImage, coeffs: &SensitivityCoefficients, spec: &PhantomSpec) -> Result<KSpaceStack> {
    if m.n() != spec.n {
        return Err(MoccaError::DimensionMismatch(format!("image N={}, spec N={}", m.n(), spec.n)));
    }
    let fft = CenteredFft::new(m.n())?;
    let mut rng = PhantomRng::new(spec.seed, STREAM_NOISE);
    let coils = coil_images(m, coeffs)?
        .into_iter()
        .map(|mut img| {
            fft.forward_in_place(img.values_mut());
            if spec.noise > 0.0 {
                img.values_mut().iter_mut().for_each(|v| *v += rng.complex_gaussian() * spec.noise);
            }
            img
        })
        .collect();
    KSpaceStack::new(coils)
}

/// Lattice of `kind` united with the `(M+L-1)`-sized calibration block.
pub fn make_pattern(kind: PatternKind, n: usize, equations: usize, support: usize) -> Result<SamplingPattern> {
    if equations + support < 1 {
        return Err(MoccaError::InvalidArgument("empty calibration block".into()));
    }
    SamplingPattern::new(kind, n, equations + support - 1)
}

/// Normalized sum of squares `(Σ_j |m ∘ s_j|²)^{1/2}` of noiseless coil images.
pub fn sos_image(coil_images: &[ComplexImage]) -> Result<RealImage> {
    let n = coil_images
        .first()
        .ok_or_else(|| MoccaError::InvalidArgument("no coil images".into()))?
        .n();
    let mut acc = vec![0.0; n * n];
    for img in coil_images {
        for (a, v) in acc.iter_mut().zip(img.values()) {
            *a += v.norm_sqr();
        }
    }
    acc.iter_mut().for_each(|v| *v = v.sqrt());
    RealImage::from_vec(n, acc)?.normalized()
}

/// Everything generated for one spec.
#[derive(Clone, Debug)]
pub struct Phantom {
    pub spec: PhantomSpec,
    pub magnetization: ComplexImage,
    pub coefficients: SensitivityCoefficients,
    /// Full k-space of all coils, noise included.
    pub kspace: KSpaceStack,
    /// Normalized sum of squares of the noiseless coil images.
    pub truth: RealImage,
}

impl Phantom {
    pub fn generate(spec: &PhantomSpec) -> Result<Self> {
        let coefficients = random_coefficients(spec)?;
        let magnetization = random_magnetization(spec)?;
        let kspace = forward_model(&magnetization, &coefficients, spec)?;
        let truth = sos_image(&coil_images(&magnetization, &coefficients)?)?;
        Ok(Self { spec: *spec, magnetization, coefficients, kspace, truth })
    }
}
