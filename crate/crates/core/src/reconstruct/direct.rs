use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use super::check_shapes;
use crate::calibration::{KSpaceStack, SensitivitySet};
use crate::error::{MoccaError, Result};
use crate::fourier::CenteredFft;
use crate::image::ComplexImage;
use crate::lattice::{wrap, GridIndex};
use crate::sampling::SamplingPattern;

/// Pivots below this fraction of the largest diagonal entry count as zero.
const PIVOT_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct DirectOutcome {
    pub image: ComplexImage,
    /// Number of pixels coupled in each group.
    pub group_size: usize,
    /// Groups solved by pseudoinverse because their system was singular.
    pub singular_groups: usize,
}

/// Row and column strides of a lattice pattern, checked against `N`.
pub(crate) fn lattice_strides(pattern: &SamplingPattern) -> Result<(usize, usize)> {
    let (a, b) = pattern
        .kind()
        .strides()
        .ok_or_else(|| MoccaError::UnsupportedPattern("the direct solver needs a regular lattice".into()))?;
    let n = pattern.n();
    for s in [a, b] {
        if s > 1 && n % (2 * s) != 0 {
            return Err(MoccaError::UnsupportedPattern(format!(
                "stride {s} needs N to be a multiple of {}, got {n}",
                2 * s
            )));
        }
    }
    Ok((a, b))
}

fn members(n: usize, a: usize, b: usize, rep: GridIndex) -> impl Iterator<Item = GridIndex> {
    let (d1, d2) = ((n / a) as i64, (n / b) as i64);
    (0..b as i64).flat_map(move |t2| {
        (0..a as i64).map(move |t1| wrap(rep.offset(t1 * d1, t2 * d2), n))
    })
}

/// Pixels coupled with `idx` by the lattice: `idx + (t1·N/a, t2·N/b)`
/// modulo `N`.
pub fn group_members(pattern: &SamplingPattern, idx: GridIndex) -> Result<Vec<GridIndex>> {
    let (a, b) = lattice_strides(pattern)?;
    if !pattern.grid().contains(idx) {
        return Err(MoccaError::InvalidArgument(format!("{idx:?} is outside the image grid")));
    }
    Ok(members(pattern.n(), a, b, idx).collect())
}

/// Solves the normal equations on a regular lattice group by group.
///
/// Only samples on the lattice itself are used; calibration samples off the
/// lattice are dropped because they break the decoupling. With
/// `R = Σ_j conj(s̃_j) ∘ F⁻¹ P y_j` each group of `g` coupled pixels solves
///
/// ```text
/// ((gβ/N²) I + Σ_j conj(s̃_j) s̃_jᵀ) m = g R
/// ```
///
/// restricted to the group. Singular groups are solved by pseudoinverse
/// (with a warning) when `pseudo_inverse_fallback` is set and are an error
/// otherwise.
pub fn direct_block_solver(
    stack: &KSpaceStack,
    pattern: &SamplingPattern,
    sens: &SensitivitySet,
    beta: f64,
    pseudo_inverse_fallback: bool,
) -> Result<DirectOutcome> {
    check_shapes(stack, pattern, sens)?;
    let (a, b) = lattice_strides(pattern)?;
    let n = pattern.n();
    if !(beta >= 0.0 && beta < (n * n) as f64) {
        return Err(MoccaError::InvalidArgument(format!("beta={beta} outside [0, N²)")));
    }
    let lattice = pattern.regular_lattice()?;
    let fft = CenteredFft::new(n)?;
    let rhs = super::adjoint_sum(&fft, stack, lattice.mask(), sens);

    let g = a * b;
    let grid = pattern.grid();
    let shift = g as f64 * beta / (n * n) as f64;
    let coils = sens.normalized();
    let mut image = ComplexImage::zeros(n);
    let mut singular = 0;
    let mut positions = Vec::with_capacity(g);
    let lo = grid.min();
    for r2 in lo..lo + (n / b) as i64 {
        for r1 in lo..lo + (n / a) as i64 {
            let rep = GridIndex::new(r1, r2);
            positions.clear();
            positions.extend(members(n, a, b, rep).map(|i| grid.position(i)));
            let s = DMatrix::from_fn(coils.len(), g, |j, t| coils[j].values()[positions[t]]);
            let mut gram = s.adjoint() * &s;
            for t in 0..g {
                gram[(t, t)] += Complex64::new(shift, 0.0);
            }
            let rhs_g = DVector::from_fn(g, |t, _| rhs.values()[positions[t]] * g as f64);
            let x = match solve_hermitian(&gram, &rhs_g) {
                Ok(x) => x,
                Err(pivot) if pseudo_inverse_fallback => {
                    singular += 1;
                    log::debug!("singular group at {:?} (pivot {pivot:e})", rep.as_tuple());
                    pseudo_solve(gram, &rhs_g)
                }
                Err(pivot) => return Err(MoccaError::SingularGroup { index: rep.as_tuple(), pivot }),
            };
            for (t, &p) in positions.iter().enumerate() {
                image.values_mut()[p] = x[t];
            }
        }
    }
    if singular > 0 {
        log::warn!("{singular} singular group system(s) solved by pseudoinverse; consider beta > 0");
    }
    Ok(DirectOutcome { image, group_size: g, singular_groups: singular })
}

/// Cholesky solve; returns the offending relative pivot when the matrix is
/// numerically singular.
fn solve_hermitian(gram: &DMatrix<Complex64>, rhs: &DVector<Complex64>) -> std::result::Result<DVector<Complex64>, f64> {
    let scale = gram.diagonal().iter().map(|v| v.re).fold(0.0, f64::max);
    if scale <= 0.0 {
        return Err(0.0);
    }
    let chol = Cholesky::new(gram.clone()).ok_or(0.0)?;
    let pivot = chol.l_dirty().diagonal().iter().map(|v| v.norm_sqr()).fold(f64::INFINITY, f64::min) / scale;
    if pivot <= PIVOT_TOL {
        return Err(pivot);
    }
    Ok(chol.solve(rhs))
}

/// Minimal norm solution through the eigendecomposition.
fn pseudo_solve(gram: DMatrix<Complex64>, rhs: &DVector<Complex64>) -> DVector<Complex64> {
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let mut x = DVector::zeros(rhs.len());
    if top <= 0.0 {
        return x;
    }
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > PIVOT_TOL * top {
            let u = eig.eigenvectors.column(k);
            let coef = u.dotc(rhs) / lambda;
            x += u * coef;
        }
    }
    x
}
