//! Coil sensitivity calibration from the fully sampled k-space center.
//!
//! Every coil image is `m ∘ s_j`, and each sensitivity is modeled as a
//! trigonometric polynomial with coefficients on `Λ_L`. For any pair of coils
//! `y_j * c_ℓ = y_ℓ * c_j` holds in k-space, which is linear in the stacked
//! coefficients. Restricting those convolutions to `Λ_M` gives the
//! calibration matrix `A_M`, whose (approximate) nullspace holds the
//! coefficients. Only samples in `Λ_{M+L-1}` are touched.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{MoccaError, Result};
use crate::fourier::{synthesize_with, CenteredFft, CoefficientVector};
use crate::image::{ComplexImage, RealImage};
use crate::lattice::CenteredGrid;
use crate::sampling::SamplingPattern;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// k-space data of all coils on `Λ_N`. Non-acquired samples hold zero.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceStack {
    n: usize,
    coils: Vec<ComplexImage>,
}

impl KSpaceStack {
    pub fn new(coils: Vec<ComplexImage>) -> Result<Self> {
        let first = coils
            .first()
            .ok_or_else(|| MoccaError::InvalidArgument("a k-space stack needs at least one coil".into()))?;
        let n = first.n();
        CenteredGrid::even(n)?;
        if let Some((j, c)) = coils.iter().enumerate().find(|(_, c)| c.n() != n) {
            return Err(MoccaError::DimensionMismatch(format!(
                "coil {j} has size {}, coil 0 has size {n}",
                c.n()
            )));
        }
        Ok(Self { n, coils })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_coils(&self) -> usize {
        self.coils.len()
    }

    pub fn coil(&self, j: usize) -> &ComplexImage {
        &self.coils[j]
    }

    pub fn coils(&self) -> &[ComplexImage] {
        &self.coils
    }

    pub fn into_coils(self) -> Vec<ComplexImage> {
        self.coils
    }

    /// Applies `P`, zeroing every sample outside the pattern.
    pub fn masked(&self, pattern: &SamplingPattern) -> Result<Self> {
        if pattern.n() != self.n {
            return Err(MoccaError::DimensionMismatch(format!(
                "pattern is {}x{}, data is {}x{}",
                pattern.n(),
                pattern.n(),
                self.n,
                self.n
            )));
        }
        let coils = self
            .coils
            .iter()
            .map(|c| {
                let mut c = c.clone();
                for (v, &keep) in c.values_mut().iter_mut().zip(pattern.mask()) {
                    if !keep {
                        *v = ZERO;
                    }
                }
                c
            })
            .collect();
        Ok(Self { n: self.n, coils })
    }

    /// Positions holding a nonzero sample in at least one coil.
    pub fn nonzero_mask(&self) -> Vec<bool> {
        (0..self.n * self.n)
            .map(|p| self.coils.iter().any(|c| c.values()[p] != ZERO))
            .collect()
    }
}

/// How many of the smallest right singular vectors enter the combination.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SingularCount {
    /// All singular values below `σ_max / 100`, at least one.
    Auto,
    Fixed(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationConfig {
    /// `L`: odd side length of the coefficient support.
    pub support: usize,
    /// `M`: side length of the equation set `Λ_M`.
    pub equations: usize,
    pub singular_vectors: SingularCount,
    /// Relative threshold: `d` is treated as zero below `threshold · max d`.
    pub threshold: f64,
    /// Explicit combination weights, one per singular vector.
    pub alpha: Option<Vec<Complex64>>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            support: 5,
            equations: 20,
            singular_vectors: SingularCount::Auto,
            threshold: 1e-8,
            alpha: None,
        }
    }
}

impl CalibrationConfig {
    /// Side length `M+L-1` of the block that must be fully sampled.
    pub fn acs_size(&self) -> usize {
        self.equations + self.support - 1
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        CenteredGrid::odd(self.support)?;
        if self.equations < self.support {
            return Err(MoccaError::InvalidArgument(format!(
                "M={} must be at least L={}",
                self.equations, self.support
            )));
        }
        if self.acs_size() > n {
            return Err(MoccaError::InvalidArgument(format!(
                "calibration block M+L-1={} exceeds N={n}",
                self.acs_size()
            )));
        }
        if !(self.threshold >= 0.0 && self.threshold < 1.0) {
            return Err(MoccaError::InvalidArgument(format!("threshold {} outside [0, 1)", self.threshold)));
        }
        if let SingularCount::Fixed(0) = self.singular_vectors {
            return Err(MoccaError::InvalidArgument("at least one singular vector is required".into()));
        }
        if let (Some(alpha), SingularCount::Fixed(k)) = (&self.alpha, self.singular_vectors) {
            if alpha.len() != k {
                return Err(MoccaError::InvalidArgument(format!(
                    "{} weights given for {k} singular vectors",
                    alpha.len()
                )));
            }
        }
        Ok(())
    }
}

/// The calibration matrix `A_M` together with its block layout.
#[derive(Clone, Debug)]
pub struct MoccaMatrix {
    matrix: DMatrix<Complex64>,
    coils: usize,
    equations: usize,
    support: usize,
}

impl MoccaMatrix {
    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn num_coils(&self) -> usize {
        self.coils
    }

    pub fn equations(&self) -> usize {
        self.equations
    }

    pub fn support(&self) -> usize {
        self.support
    }

    /// Block `(j, k)` of size `M²×L²`.
    pub fn block(&self, j: usize, k: usize) -> DMatrix<Complex64> {
        let (m2, l2) = (self.equations.pow(2), self.support.pow(2));
        self.matrix.view((j * m2, k * l2), (m2, l2)).into_owned()
    }
}

/// Convolution matrix with entries `y_{ν-r}` for `ν ∈ Λ_M`, `r ∈ Λ_L`.
pub fn block_hankel(y: &ComplexImage, equations: usize, support: usize) -> Result<DMatrix<Complex64>> {
    let rows = CenteredGrid::new(equations)?;
    let cols = CenteredGrid::odd(support)?;
    if equations + support - 1 > y.n() {
        return Err(MoccaError::InvalidArgument(format!(
            "M+L-1={} exceeds N={}",
            equations + support - 1,
            y.n()
        )));
    }
    let grid = y.grid();
    let data = y.values();
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, k| {
        let nu = rows.index_at(i);
        let r = cols.index_at(k);
        data[grid.position(nu.offset(-r.n1, -r.n2))]
    }))
}

/// Builds `A_M`. Block `(j, ℓ)` is `Y_j` for `j ≠ ℓ` and `-Σ_{ℓ≠j} Y_ℓ` on the
/// diagonal. The data are not checked for missing samples; see
/// [`assemble_mocca_checked`].
pub fn assemble_mocca(stack: &KSpaceStack, cfg: &CalibrationConfig) -> Result<MoccaMatrix> {
    cfg.validate(stack.n())?;
    let nc = stack.num_coils();
    if nc < 2 {
        return Err(MoccaError::InvalidArgument(format!("calibration needs at least two coils, got {nc}")));
    }
    let (m, l) = (cfg.equations, cfg.support);
    let blocks = stack
        .coils()
        .iter()
        .map(|y| block_hankel(y, m, l))
        .collect::<Result<Vec<_>>>()?;
    let total = blocks.iter().fold(DMatrix::zeros(m * m, l * l), |acc, b| acc + b);
    let (m2, l2) = (m * m, l * l);
    let mut matrix = DMatrix::zeros(nc * m2, nc * l2);
    for j in 0..nc {
        for k in 0..nc {
            let block = if j == k { &blocks[j] - &total } else { blocks[j].clone() };
            matrix.view_mut((j * m2, k * l2), (m2, l2)).copy_from(&block);
        }
    }
    Ok(MoccaMatrix { matrix, coils: nc, equations: m, support: l })
}

/// [`assemble_mocca`] after verifying that `pattern` covers `Λ_{M+L-1}`.
pub fn assemble_mocca_checked(
    stack: &KSpaceStack,
    cfg: &CalibrationConfig,
    pattern: &SamplingPattern,
) -> Result<MoccaMatrix> {
    cfg.validate(stack.n())?;
    check_coverage(pattern, cfg.acs_size())?;
    assemble_mocca(stack, cfg)
}

fn check_coverage(pattern: &SamplingPattern, size: usize) -> Result<()> {
    let block = CenteredGrid::new(size)?;
    match block.enumerate().find(|&i| !pattern.is_acquired(i)) {
        Some(idx) => Err(MoccaError::MissingAcs { index: idx.as_tuple(), size }),
        None => Ok(()),
    }
}

/// All singular values of `A_M` in ascending order with their right singular
/// vectors as columns. Each vector is rotated so that its largest entry is
/// real and positive.
#[derive(Clone, Debug)]
pub struct SingularSpectrum {
    values: Vec<f64>,
    vectors: DMatrix<Complex64>,
}

impl SingularSpectrum {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> &DMatrix<Complex64> {
        &self.vectors
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Number of singular values below `σ_max / 100`, clamped to at least one.
    pub fn auto_count(&self) -> usize {
        let cut = self.max() / 100.0;
        self.values.iter().filter(|&&s| s < cut).count().clamp(1, self.values.len())
    }

    pub fn smallest(&self, count: usize) -> Result<SmallestSingular> {
        if count == 0 || count > self.values.len() {
            return Err(MoccaError::InvalidArgument(format!(
                "requested {count} singular vectors out of {}",
                self.values.len()
            )));
        }
        Ok(SmallestSingular {
            values: self.values[..count].to_vec(),
            vectors: self.vectors.columns(0, count).into_owned(),
        })
    }
}

/// The `N_s` smallest singular values and their right singular vectors.
#[derive(Clone, Debug)]
pub struct SmallestSingular {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

/// Full spectrum of `A_M` via a QR factorization followed by an SVD of the
/// small triangular factor.
pub fn singular_spectrum(a: &MoccaMatrix) -> Result<SingularSpectrum> {
    let r = triangular_factor(a.matrix());
    let cols = r.ncols();
    let svd = nalgebra::SVD::try_new(r, false, true, f64::EPSILON, 0)
        .ok_or_else(|| MoccaError::Svd("iteration did not converge".into()))?;
    let v_t = svd.v_t.ok_or_else(|| MoccaError::Svd("right singular vectors missing".into()))?;
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &k| svd.singular_values[i].total_cmp(&svd.singular_values[k]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut vectors = DMatrix::zeros(cols, cols);
    for (dst, &src) in order.iter().enumerate() {
        let mut v: DVector<Complex64> = v_t.row(src).adjoint();
        fix_phase(&mut v);
        vectors.set_column(dst, &v);
    }
    Ok(SingularSpectrum { values, vectors })
}

/// `N_s` smallest singular values and vectors of `A_M`.
pub fn smallest_singular_vectors(a: &MoccaMatrix, count: usize) -> Result<SmallestSingular> {
    singular_spectrum(a)?.smallest(count)
}

/// Smallest singular value and vector by inverse iteration on `R*R`, where
/// `R` is the triangular QR factor. Cheaper than the full SVD when a single
/// vector suffices.
pub fn smallest_singular_vector_inverse_iteration(
    a: &MoccaMatrix,
    max_iter: usize,
    tol: f64,
) -> Result<(f64, DVector<Complex64>)> {
    let mut r = triangular_factor(a.matrix());
    let n = r.ncols();
    let scale = (0..n).map(|i| r[(i, i)].norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for i in 0..n {
        if r[(i, i)].norm() < f64::EPSILON * scale {
            r[(i, i)] = Complex64::new(f64::EPSILON * scale, 0.0);
        }
    }
    let r_h = r.adjoint();
    let mut x = DVector::from_element(n, Complex64::new(1.0 / (n as f64).sqrt(), 0.0));
    for _ in 0..max_iter.max(1) {
        let z = r_h
            .solve_lower_triangular(&x)
            .ok_or_else(|| MoccaError::Svd("triangular solve failed".into()))?;
        let mut next = r
            .solve_upper_triangular(&z)
            .ok_or_else(|| MoccaError::Svd("triangular solve failed".into()))?;
        let norm = next.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(MoccaError::Svd("inverse iteration broke down".into()));
        }
        next /= Complex64::new(norm, 0.0);
        let overlap = x.dotc(&next).norm();
        x = next;
        if 1.0 - overlap <= tol {
            break;
        }
    }
    fix_phase(&mut x);
    let sigma = (a.matrix() * &x).norm();
    Ok((sigma, x))
}

/// Square triangular factor with the same singular values and right
/// singular vectors as `a`.
fn triangular_factor(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let cols = a.ncols();
    let padded;
    let a = if a.nrows() < cols {
        padded = a.clone().resize_vertically(cols, ZERO);
        &padded
    } else {
        a
    };
    a.clone().qr().r()
}

fn fix_phase(v: &mut DVector<Complex64>) {
    let mut best = 0;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > v[best].norm() {
            best = i;
        }
    }
    let lead = v[best];
    if lead.norm() > 0.0 {
        let rot = lead.conj() / lead.norm();
        v.iter_mut().for_each(|z| *z *= rot);
    }
}

/// Sensitivity coefficients `c^{(j)}` on `Λ_L`, one vector per coil.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityCoefficients {
    coils: Vec<CoefficientVector>,
}

impl SensitivityCoefficients {
    pub fn new(coils: Vec<CoefficientVector>) -> Result<Self> {
        let l = coils
            .first()
            .ok_or_else(|| MoccaError::InvalidArgument("no coefficient vectors".into()))?
            .l();
        if coils.iter().any(|c| c.l() != l) {
            return Err(MoccaError::DimensionMismatch("coefficient supports differ".into()));
        }
        Ok(Self { coils })
    }

    /// Splits a stacked vector of length `L²·N_c` into per-coil blocks.
    pub fn from_stacked(l: usize, stacked: &[Complex64]) -> Result<Self> {
        let l2 = l * l;
        if l2 == 0 || stacked.len() % l2 != 0 {
            return Err(MoccaError::DimensionMismatch(format!(
                "stacked length {} is not a multiple of L²={l2}",
                stacked.len()
            )));
        }
        let coils = stacked
            .chunks(l2)
            .map(|c| CoefficientVector::new(l, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(coils)
    }

    pub fn stacked(&self) -> Vec<Complex64> {
        self.coils.iter().flat_map(|c| c.values().iter().copied()).collect()
    }

    pub fn support(&self) -> usize {
        self.coils[0].l()
    }

    pub fn num_coils(&self) -> usize {
        self.coils.len()
    }

    pub fn coil(&self, j: usize) -> &CoefficientVector {
        &self.coils[j]
    }

    pub fn coils(&self) -> &[CoefficientVector] {
        &self.coils
    }
}

/// Combines singular vectors into one coefficient vector of unit norm.
///
/// Without explicit weights, `α = V_s* w` with `w` stacking the center unit
/// vector of every coil block, so `c = V_s V_s* w` is the projection of `w`
/// onto the span. The result does not depend on the phases of the individual
/// vectors.
pub fn combine_singular_vectors(
    singular: &SmallestSingular,
    support: usize,
    alpha: Option<&[Complex64]>,
) -> Result<SensitivityCoefficients> {
    let v = &singular.vectors;
    let l2 = support * support;
    if l2 == 0 || v.nrows() % l2 != 0 {
        return Err(MoccaError::DimensionMismatch(format!(
            "vector length {} is not a multiple of L²={l2}",
            v.nrows()
        )));
    }
    let coils = v.nrows() / l2;
    let center = (l2 - 1) / 2;
    let weights: Vec<Complex64> = match alpha {
        Some(a) => {
            if a.len() != v.ncols() {
                return Err(MoccaError::InvalidArgument(format!(
                    "{} weights given for {} singular vectors",
                    a.len(),
                    v.ncols()
                )));
            }
            a.to_vec()
        }
        None => (0..v.ncols())
            .map(|k| (0..coils).map(|j| v[(j * l2 + center, k)].conj()).sum())
            .collect(),
    };
    let c = v * DVector::from_vec(weights.clone());
    let norm = c.norm();
    let scale: f64 = weights.iter().map(|w| w.norm()).sum();
    if !(norm > 1e-13 * scale) || norm == 0.0 {
        return Err(MoccaError::ZeroCombination);
    }
    let c = c / Complex64::new(norm, 0.0);
    SensitivityCoefficients::from_stacked(support, c.as_slice())
}

/// Sensitivities on `Λ_N`: the raw polynomials `s_j`, their sum of squares
/// `d`, the regularized inverse `d⁺` and the normalized `s̃_j = √d⁺ s_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SensitivitySet {
    raw: Vec<ComplexImage>,
    normalized: Vec<ComplexImage>,
    d: RealImage,
    d_plus: RealImage,
}

impl SensitivitySet {
    /// Wraps already normalized sensitivities (for instance read from disk).
    /// `raw` is set equal to `normalized`.
    pub fn from_normalized(normalized: Vec<ComplexImage>) -> Result<Self> {
        let stack = KSpaceStack::new(normalized)?;
        let normalized = stack.into_coils();
        let (d, d_plus) = sum_of_squares(&normalized, 0.0);
        Ok(Self { raw: normalized.clone(), normalized, d, d_plus })
    }

    pub fn n(&self) -> usize {
        self.d.n()
    }

    pub fn num_coils(&self) -> usize {
        self.normalized.len()
    }

    pub fn raw(&self) -> &[ComplexImage] {
        &self.raw
    }

    pub fn normalized(&self) -> &[ComplexImage] {
        &self.normalized
    }

    pub fn d(&self) -> &RealImage {
        &self.d
    }

    pub fn d_plus(&self) -> &RealImage {
        &self.d_plus
    }

    /// Multiplies every normalized sensitivity pixelwise by `phase`.
    pub fn apply_phase(&mut self, phase: &[Complex64]) {
        for s in &mut self.normalized {
            for (v, p) in s.values_mut().iter_mut().zip(phase) {
                *v *= p;
            }
        }
    }
}

fn sum_of_squares(s: &[ComplexImage], threshold: f64) -> (RealImage, RealImage) {
    let n = s[0].n();
    let mut d = vec![0.0; n * n];
    for img in s {
        for (acc, v) in d.iter_mut().zip(img.values()) {
            *acc += v.norm_sqr();
        }
    }
    let eps = threshold * d.iter().copied().fold(0.0, f64::max);
    let d_plus = d.iter().map(|&x| if x > eps && x > 0.0 { 1.0 / x } else { 0.0 }).collect();
    (RealImage::from_vec(n, d).expect("sized"), RealImage::from_vec(n, d_plus).expect("sized"))
}

/// Evaluates the sensitivity polynomials on `Λ_N` and normalizes them.
/// `threshold` is relative to `max d`.
pub fn build_sensitivities(coeffs: &SensitivityCoefficients, n: usize, threshold: f64) -> Result<SensitivitySet> {
    let fft = CenteredFft::new(n)?;
    let raw = coeffs
        .coils()
        .iter()
        .map(|c| synthesize_with(&fft, c))
        .collect::<Result<Vec<_>>>()?;
    let (d, d_plus) = sum_of_squares(&raw, threshold);
    let normalized = raw
        .iter()
        .map(|s| {
            let mut t = s.clone();
            for (v, dp) in t.values_mut().iter_mut().zip(d_plus.values()) {
                *v *= dp.sqrt();
            }
            t
        })
        .collect();
    Ok(SensitivitySet { raw, normalized, d, d_plus })
}

/// Output of [`calibrate`].
#[derive(Clone, Debug)]
pub struct Calibration {
    /// All singular values of `A_M`, ascending.
    pub spectrum: Vec<f64>,
    /// Number of singular vectors that were combined.
    pub num_singular: usize,
    pub coefficients: SensitivityCoefficients,
    pub sensitivities: SensitivitySet,
}

impl Calibration {
    /// `σ_{N_s+1} / σ_max`: how clearly the used vectors separate from the rest.
    pub fn gap_ratio(&self) -> f64 {
        let max = self.spectrum.last().copied().unwrap_or(0.0);
        match self.spectrum.get(self.num_singular) {
            Some(&s) if max > 0.0 => s / max,
            _ => f64::NAN,
        }
    }

    /// `σ_1 / σ_max`.
    pub fn smallest_ratio(&self) -> f64 {
        let max = self.spectrum.last().copied().unwrap_or(0.0);
        if max > 0.0 {
            self.spectrum[0] / max
        } else {
            f64::NAN
        }
    }
}

/// Full calibration: assemble `A_M`, take its smallest singular vectors,
/// combine them and evaluate the sensitivities on the image grid. When a
/// pattern is given the calibration block is checked against it.
pub fn calibrate(
    stack: &KSpaceStack,
    cfg: &CalibrationConfig,
    pattern: Option<&SamplingPattern>,
) -> Result<Calibration> {
    let a = match pattern {
        Some(p) => assemble_mocca_checked(stack, cfg, p)?,
        None => assemble_mocca(stack, cfg)?,
    };
    let spectrum = singular_spectrum(&a)?;
    let count = match cfg.singular_vectors {
        SingularCount::Auto => spectrum.auto_count(),
        SingularCount::Fixed(k) => k,
    };
    let smallest = spectrum.smallest(count)?;
    let coefficients = combine_singular_vectors(&smallest, cfg.support, cfg.alpha.as_deref())?;
    let sensitivities = build_sensitivities(&coefficients, stack.n(), cfg.threshold)?;
    log::info!(
        "calibration: {count} singular vector(s), sigma_1/sigma_max = {:e}",
        spectrum.values()[0] / spectrum.max().max(f64::MIN_POSITIVE)
    );
    Ok(Calibration { spectrum: spectrum.values().to_vec(), num_singular: count, coefficients, sensitivities })
}
