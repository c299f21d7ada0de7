use num_complex::Complex64;

use super::{adjoint_sum, check_shapes, ReconConfig};
use crate::calibration::{KSpaceStack, SensitivitySet};
use crate::error::Result;
use crate::fourier::{checker, CenteredFft};
use crate::image::ComplexImage;
use crate::sampling::SamplingPattern;

/// State of one iterate `m_κ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `‖m_κ - m_{κ-1}‖_∞` with `m_{-1} = 0`.
    pub step: f64,
    /// `‖(βI + Σ B_j*B_j) m_κ - Σ B_j* P y_j‖₂`.
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct IterativeOutcome {
    pub image: ComplexImage,
    /// Number of updates performed.
    pub iterations: usize,
    pub converged: bool,
    /// One record per visited iterate, including the returned one.
    pub history: Vec<IterationRecord>,
}

impl IterativeOutcome {
    pub fn final_residual(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.residual)
    }
}

/// Weighted Jacobi-Richardson iteration.
///
/// ```text
/// m_0     = Σ_j conj(s̃_j) ∘ F⁻¹ P y_j
/// y_j     = ((1 - β/N²) I - P) F (s̃_j ∘ m_κ) + P y_j
/// m_{κ+1} = Σ_j conj(s̃_j) ∘ F⁻¹ y_j
/// ```
///
/// Converges for `0 <= β < N²`; with `β = 0` and a singular system the limit
/// is the minimal norm solution. Missing convergence within `max_iter` is
/// reported through [`IterativeOutcome::converged`].
pub fn jacobi_richardson(
    stack: &KSpaceStack,
    pattern: &SamplingPattern,
    sens: &SensitivitySet,
    cfg: &ReconConfig,
) -> Result<IterativeOutcome> {
    check_shapes(stack, pattern, sens)?;
    cfg.validate(stack.n())?;
    let n = stack.n();
    let fft = CenteredFft::new(n)?;
    let mask = pattern.mask();
    let n2 = (n * n) as f64;
    let damp = 1.0 - cfg.beta / n2;

    // The loop runs on sign-flipped copies of the sensitivities and data and
    // keeps k-space transposed, which saves two sign passes and one
    // transpose per transform (see `CenteredFft::forward_raw_transposed`).
    let sign = |p: usize, v: Complex64| if checker(p, n) { -v } else { v };
    let transposed = |p: usize| (p % n) * n + p / n;
    let s_signed: Vec<Vec<Complex64>> = sens
        .normalized()
        .iter()
        .map(|s| s.values().iter().enumerate().map(|(p, &v)| sign(p, v)).collect())
        .collect();
    let mut mask_t = vec![false; n * n];
    for (p, &keep) in mask.iter().enumerate() {
        mask_t[transposed(p)] = keep;
    }
    let zero = Complex64::new(0.0, 0.0);
    let mut y_t: Vec<Vec<Complex64>> = Vec::with_capacity(stack.num_coils());
    let mut c_signed: Vec<Vec<Complex64>> = Vec::with_capacity(stack.num_coils());
    for y in stack.coils() {
        let mut yt = vec![zero; n * n];
        let mut masked = vec![zero; n * n];
        for (p, (&v, &keep)) in y.values().iter().zip(mask).enumerate() {
            if keep {
                yt[transposed(p)] = sign(p, v);
                masked[p] = v;
            }
        }
        fft.inverse_in_place(&mut masked);
        y_t.push(yt);
        c_signed.push(masked.iter().enumerate().map(|(p, &v)| sign(p, v)).collect());
    }
    let m0 = adjoint_sum(&fft, stack, mask, sens);

    let mut history = Vec::new();
    let mut prev = vec![zero; n * n];
    let mut cur = m0.values().to_vec();
    let mut next = vec![zero; n * n];
    let mut normal = vec![zero; n * n];
    let mut buf = vec![zero; n * n];
    let mut kspace = vec![zero; n * n];
    let inv_n2 = 1.0 / n2;
    let shrink = cfg.beta / n2;
    let mut k = 0;
    let mut last_residual = f64::INFINITY;
    loop {
        next.iter_mut().for_each(|v| *v = zero);
        normal.iter_mut().for_each(|v| *v = zero);
        for ((s, y), c) in s_signed.iter().zip(&y_t).zip(&c_signed) {
            for ((b, sv), m) in buf.iter_mut().zip(s).zip(&cur) {
                *b = sv * m;
            }
            fft.forward_raw_transposed(&mut buf, &mut kspace);
            for ((b, &keep), yv) in kspace.iter_mut().zip(&mask_t).zip(y) {
                *b = if keep { yv - *b * shrink } else { *b * damp };
            }
            fft.inverse_raw_from_transposed(&mut kspace, &mut buf);
            for p in 0..n * n {
                let w = buf[p] * inv_n2;
                let sc = s[p].conj();
                next[p] += sc * w;
                // F⁻¹ P F (s̃ ∘ m) recovered from the update without another FFT
                normal[p] += sc * (s[p] * cur[p] * damp + c[p] - w);
            }
        }
        let residual = n2
            * cur
                .iter()
                .zip(&normal)
                .zip(m0.values())
                .map(|((m, a), r)| (m * (cfg.beta / n2) + a - r).norm_sqr())
                .sum::<f64>()
                .sqrt();
        let step = cur.iter().zip(&prev).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        history.push(IterationRecord { iteration: k, step, residual });
        if residual > last_residual * (1.0 + 1e-8) + 1e-12 {
            log::debug!("residual increased at iteration {k}: {last_residual:e} -> {residual:e}");
        }
        last_residual = residual;

        let (stop, converged) = match cfg.fixed_iterations {
            Some(fixed) => (k >= fixed, true),
            None if step <= cfg.tol => (true, true),
            None => (k >= cfg.max_iter, false),
        };
        if stop {
            if !converged {
                log::warn!("no convergence after {k} iterations (last step {step:e})");
            }
            let image = ComplexImage::from_vec(n, cur)?;
            return Ok(IterativeOutcome { image, iterations: k, converged, history });
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{build_sensitivities, SensitivityCoefficients};
    use crate::fourier::dft2_centered;
    use crate::reconstruct::normal_rhs;
    use crate::sampling::PatternKind;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn smooth_sens(n: usize, coils: usize) -> SensitivitySet {
        let stacked: Vec<_> = (0..9 * coils)
            .map(|k| c(((k * 7 + 3) % 11) as f64 / 11.0 - 0.3, ((k * 5 + 1) % 13) as f64 / 13.0 - 0.5))
            .collect();
        build_sensitivities(&SensitivityCoefficients::from_stacked(3, &stacked).unwrap(), n, 1e-8).unwrap()
    }

    fn data(sens: &SensitivitySet, m: &ComplexImage) -> KSpaceStack {
        let coils = sens
            .normalized()
            .iter()
            .map(|s| {
                let mut p = m.clone();
                p.values_mut().iter_mut().zip(s.values()).for_each(|(a, b)| *a *= b);
                dft2_centered(&p).unwrap()
            })
            .collect();
        KSpaceStack::new(coils).unwrap()
    }

    #[test]
    fn full_pattern_is_stationary() {
        let n = 8;
        let sens = smooth_sens(n, 2);
        let m = ComplexImage::from_fn(n, |i| c(1.0 + 0.1 * i.n1 as f64, 0.05 * i.n2 as f64));
        let stack = data(&sens, &m);
        let pattern = SamplingPattern::new(PatternKind::Full, n, 0).unwrap();
        let cfg = ReconConfig { beta: 0.0, ..Default::default() };
        let out = jacobi_richardson(&stack, &pattern, &sens, &cfg).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
        let rhs = normal_rhs(&stack, &pattern, &sens).unwrap();
        assert!(out.image.max_abs_diff(&rhs) < 1e-13);
    }

    #[test]
    fn zero_data_stops_immediately() {
        let n = 8;
        let sens = smooth_sens(n, 2);
        let stack = KSpaceStack::new(vec![ComplexImage::zeros(n); 2]).unwrap();
        let pattern = SamplingPattern::new(PatternKind::Columns(2), n, 2).unwrap();
        let out = jacobi_richardson(&stack, &pattern, &sens, &ReconConfig::default()).unwrap();
        assert!(out.iterations <= 1);
        assert_eq!(out.image.norm2(), 0.0);
    }

    #[test]
    fn fixed_iteration_count_is_honoured() {
        let n = 8;
        let sens = smooth_sens(n, 2);
        let m = ComplexImage::from_fn(n, |i| c(1.0, 0.02 * (i.n1 * i.n2) as f64));
        let stack = data(&sens, &m);
        let pattern = SamplingPattern::new(PatternKind::Columns(2), n, 2).unwrap();
        let cfg = ReconConfig { fixed_iterations: Some(7), ..Default::default() };
        let out = jacobi_richardson(&stack, &pattern, &sens, &cfg).unwrap();
        assert_eq!(out.iterations, 7);
        assert_eq!(out.history.len(), 8);
    }

    #[test]
    fn residual_decreases_on_consistent_data() {
        let n = 16;
        let sens = smooth_sens(n, 3);
        let m = ComplexImage::from_fn(n, |i| c(1.0 + 0.2 * (0.4 * i.n1 as f64).sin(), 0.1 * (0.3 * i.n2 as f64).cos()));
        let stack = data(&sens, &m);
        let pattern = SamplingPattern::new(PatternKind::Columns(2), n, 4).unwrap();
        let cfg = ReconConfig { beta: 0.0, tol: 1e-11, max_iter: 5000, ..Default::default() };
        let out = jacobi_richardson(&stack, &pattern, &sens, &cfg).unwrap();
        assert!(out.converged);
        for w in out.history.windows(2) {
            assert!(w[1].residual <= w[0].residual * (1.0 + 1e-6) + 1e-10, "{w:?}");
        }
        assert!(out.final_residual() <= 10.0 * cfg.tol * (n * n) as f64);
        // the sampled system has full rank here, so the limit is the true image
        assert!(out.image.max_abs_diff(&m) < 1e-8);
    }
}
