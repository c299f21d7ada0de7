//! Dense reference computations shared by the integration tests. Nothing here
//! goes through the FFT path of the library.
#![allow(dead_code)]

use std::f64::consts::PI;

use mocca::calibration::{build_sensitivities, SensitivityCoefficients, SensitivitySet};
use mocca::phantom::PhantomRng;
use mocca::{CenteredGrid, ComplexImage, RealImage, SamplingPattern};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C = Complex64;

/// `F[ν, n] = exp(-2πi ν·n / N)` over the centered grid in storage order.
pub fn dft_matrix(n: usize) -> DMatrix<C> {
    let idx: Vec<_> = CenteredGrid::new(n).unwrap().enumerate().collect();
    DMatrix::from_fn(n * n, n * n, |r, c| {
        let e = (idx[r].n1 * idx[c].n1 + idx[r].n2 * idx[c].n2).rem_euclid(n as i64);
        C::from_polar(1.0, -2.0 * PI * e as f64 / n as f64)
    })
}

/// `B_j = P F diag(s̃_j)`, with the rows of unacquired samples zeroed.
pub fn sampled_operators(sens: &SensitivitySet, pattern: &SamplingPattern) -> Vec<DMatrix<C>> {
    let n = pattern.n();
    let f = dft_matrix(n);
    sens.normalized()
        .iter()
        .map(|s| {
            DMatrix::from_fn(n * n, n * n, |r, c| {
                if pattern.mask()[r] {
                    f[(r, c)] * s.values()[c]
                } else {
                    C::new(0.0, 0.0)
                }
            })
        })
        .collect()
}

/// `βI + Σ_j B_j* B_j`.
pub fn normal_matrix(ops: &[DMatrix<C>], beta: f64) -> DMatrix<C> {
    let size = ops[0].ncols();
    let mut a = DMatrix::<C>::identity(size, size) * C::new(beta, 0.0);
    for b in ops {
        a += b.adjoint() * b;
    }
    a
}

/// `Σ_j B_j* y_j` for data that is already masked.
pub fn dense_rhs(ops: &[DMatrix<C>], data: &[ComplexImage]) -> DVector<C> {
    let mut r = DVector::<C>::zeros(ops[0].ncols());
    for (b, y) in ops.iter().zip(data) {
        r += b.adjoint() * DVector::from_column_slice(y.values());
    }
    r
}

/// Masked data `P F (s̃_j ∘ m)` by dense multiplication.
pub fn sampled_data(sens: &SensitivitySet, pattern: &SamplingPattern, m: &ComplexImage) -> Vec<ComplexImage> {
    let n = pattern.n();
    sampled_operators(sens, pattern)
        .iter()
        .map(|b| ComplexImage::from_vec(n, (b * DVector::from_column_slice(m.values())).as_slice().to_vec()).unwrap())
        .collect()
}

pub fn dense_solve(a: &DMatrix<C>, b: &DVector<C>) -> DVector<C> {
    a.clone().lu().solve(b).expect("nonsingular oracle system")
}

/// Minimal-norm solution through a relative-tolerance pseudoinverse.
pub fn pinv_solve(a: &DMatrix<C>, b: &DVector<C>) -> DVector<C> {
    let svd = a.clone().svd(true, true);
    let top = svd.singular_values.max();
    let pinv = svd.pseudo_inverse(1e-10 * top).expect("both factors computed");
    pinv * b
}

pub fn to_image(n: usize, v: &DVector<C>) -> ComplexImage {
    ComplexImage::from_vec(n, v.as_slice().to_vec()).unwrap()
}

pub fn sup_diff(a: &ComplexImage, b: &ComplexImage) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// `max |test - reference| / max reference`.
pub fn max_rel_err(reference: &RealImage, test: &RealImage) -> f64 {
    let peak = reference.max();
    reference.values().iter().zip(test.values()).map(|(a, b)| (a - b).abs() / peak).fold(0.0, f64::max)
}

/// Sensitivities from random coefficients on `Λ_l`.
pub fn random_sensitivities(n: usize, coils: usize, l: usize, seed: u64) -> SensitivitySet {
    let mut rng = PhantomRng::new(seed, 100);
    let stacked: Vec<C> = (0..coils * l * l).map(|_| rng.complex_gaussian()).collect();
    let coeffs = SensitivityCoefficients::from_stacked(l, &stacked).unwrap();
    build_sensitivities(&coeffs, n, 1e-8).unwrap()
}

pub fn random_image(n: usize, seed: u64) -> ComplexImage {
    let mut rng = PhantomRng::new(seed, 101);
    ComplexImage::from_fn(n, |_| rng.complex_gaussian() + C::new(1.0, 0.0))
}

/// Random mask with roughly the given fill, plus the `acs`×`acs` center.
pub fn random_mask(n: usize, fill: f64, acs: usize, seed: u64) -> SamplingPattern {
    let mut rng = PhantomRng::new(seed, 102);
    let grid = CenteredGrid::new(n).unwrap();
    let half = (acs / 2) as i64;
    let mask = grid
        .enumerate()
        .map(|i| rng.uniform() < fill || (i.n1.abs() <= half && i.n2.abs() <= half && i.n1 < acs as i64 - half && i.n2 < acs as i64 - half))
        .collect();
    SamplingPattern::explicit(n, mask, acs).unwrap()
}
