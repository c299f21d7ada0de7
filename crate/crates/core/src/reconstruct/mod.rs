//! Image reconstruction for known sensitivities.
//!
//! With `B_j = P F diag(s̃_j)` the image solves the regularized normal
//! equations
//!
//! ```text
//! (β I + Σ_j B_j* B_j) m = Σ_j B_j* P y_j
//! ```
//!
//! [`jacobi_richardson`] handles any sampling pattern. [`direct_block_solver`]
//! exploits the decoupling into small pixel groups that a regular lattice
//! produces. [`finalize_sos`] moves the phase of the solution into the
//! sensitivities and normalizes the magnitude image.

mod diagnostic;
mod direct;
mod iterative;

pub use diagnostic::{dense_rank_test, invertibility_diagnostic, DenseRank, GroupDiagnostic, InvertibilityReport};
pub use direct::{direct_block_solver, group_members, DirectOutcome};
pub use iterative::{jacobi_richardson, IterationRecord, IterativeOutcome};

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::calibration::{KSpaceStack, SensitivitySet};
use crate::error::{MoccaError, Result};
use crate::fourier::CenteredFft;
use crate::image::{ComplexImage, RealImage};
use crate::sampling::{PatternKind, SamplingPattern};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    /// Direct for lattice patterns, iterative for explicit masks.
    Auto,
    Iterative,
    Direct,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Auto => "auto",
            SolverKind::Iterative => "iterative",
            SolverKind::Direct => "direct",
        })
    }
}

impl FromStr for SolverKind {
    type Err = MoccaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SolverKind::Auto),
            "iterative" => Ok(SolverKind::Iterative),
            "direct" => Ok(SolverKind::Direct),
            other => Err(MoccaError::InvalidArgument(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconConfig {
    /// Tikhonov weight, `0 <= β < N²`.
    pub beta: f64,
    /// Stop once `‖m_κ - m_{κ-1}‖_∞ <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Run exactly this many updates and ignore `tol`.
    pub fixed_iterations: Option<usize>,
    pub solver: SolverKind,
    /// Solve singular group systems of the direct solver by pseudoinverse
    /// instead of failing.
    pub pseudo_inverse_fallback: bool,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            beta: 1e-3,
            tol: 1e-9,
            max_iter: 200,
            fixed_iterations: None,
            solver: SolverKind::Auto,
            pseudo_inverse_fallback: true,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let limit = (n * n) as f64;
        if !(self.beta >= 0.0 && self.beta < limit) {
            return Err(MoccaError::InvalidArgument(format!(
                "beta={} outside [0, N²={limit})",
                self.beta
            )));
        }
        if !(self.tol > 0.0) {
            return Err(MoccaError::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(MoccaError::InvalidArgument("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Which solver ran and what it reported.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub image: ComplexImage,
    pub solver: SolverKind,
    pub iterative: Option<IterativeOutcome>,
    pub direct: Option<DirectOutcome>,
}

/// True if the direct solver accepts `pattern`.
pub fn direct_supported(pattern: &SamplingPattern) -> bool {
    pattern.kind() != PatternKind::Explicit
}

/// Dispatches to the configured solver.
pub fn solve(
    stack: &KSpaceStack,
    pattern: &SamplingPattern,
    sens: &SensitivitySet,
    cfg: &ReconConfig,
) -> Result<Reconstruction> {
    cfg.validate(stack.n())?;
    let solver = match cfg.solver {
        SolverKind::Auto if direct_supported(pattern) => SolverKind::Direct,
        SolverKind::Auto => SolverKind::Iterative,
        other => other,
    };
    match solver {
        SolverKind::Direct => {
            let out = direct_block_solver(stack, pattern, sens, cfg.beta, cfg.pseudo_inverse_fallback)?;
            Ok(Reconstruction { image: out.image.clone(), solver, iterative: None, direct: Some(out) })
        }
        _ => {
            let out = jacobi_richardson(stack, pattern, sens, cfg)?;
            Ok(Reconstruction { image: out.image.clone(), solver, iterative: Some(out), direct: None })
        }
    }
}

pub(crate) fn check_shapes(stack: &KSpaceStack, pattern: &SamplingPattern, sens: &SensitivitySet) -> Result<()> {
    if stack.n() != pattern.n() || stack.n() != sens.n() {
        return Err(MoccaError::DimensionMismatch(format!(
            "data N={}, pattern N={}, sensitivities N={}",
            stack.n(),
            pattern.n(),
            sens.n()
        )));
    }
    if stack.num_coils() != sens.num_coils() {
        return Err(MoccaError::DimensionMismatch(format!(
            "{} data coils but {} sensitivities",
            stack.num_coils(),
            sens.num_coils()
        )));
    }
    Ok(())
}

/// Accumulates `Σ_j conj(s̃_j) ∘ idft2(P y_j)` with a shared plan.
pub(crate) fn adjoint_sum(
    fft: &CenteredFft,
    stack: &KSpaceStack,
    mask: &[bool],
    sens: &SensitivitySet,
) -> ComplexImage {
    let n = stack.n();
    let mut out = ComplexImage::zeros(n);
    for (y, s) in stack.coils().iter().zip(sens.normalized()) {
        let mut buf: Vec<Complex64> = y
            .values()
            .iter()
            .zip(mask)
            .map(|(&v, &keep)| if keep { v } else { Complex64::new(0.0, 0.0) })
            .collect();
        fft.inverse_in_place(&mut buf);
        for ((acc, b), sv) in out.values_mut().iter_mut().zip(&buf).zip(s.values()) {
            *acc += sv.conj() * b;
        }
    }
    out
}

/// Right-hand side `Σ_j conj(s̃_j) ∘ idft2(P y_j)`, which is `1/N²` times
/// `Σ_j B_j* P y_j`.
pub fn normal_rhs(stack: &KSpaceStack, pattern: &SamplingPattern, sens: &SensitivitySet) -> Result<ComplexImage> {
    check_shapes(stack, pattern, sens)?;
    let fft = CenteredFft::new(stack.n())?;
    Ok(adjoint_sum(&fft, stack, pattern.mask(), sens))
}

/// Replaces `m` by `|m| / ‖m‖₂` and multiplies each normalized sensitivity
/// by `sign(m)` (zero where `m` vanishes), so that `m s̃_j` is unchanged up
/// to the global scale.
pub fn finalize_sos(m: &ComplexImage, sens: &SensitivitySet) -> Result<(RealImage, SensitivitySet)> {
    if m.n() != sens.n() {
        return Err(MoccaError::DimensionMismatch(format!(
            "image N={}, sensitivities N={}",
            m.n(),
            sens.n()
        )));
    }
    let magnitude = m.abs().normalized()?;
    let phase: Vec<Complex64> = m
        .values()
        .iter()
        .map(|v| {
            let r = v.norm();
            if r > 0.0 {
                v / r
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let mut adjusted = sens.clone();
    adjusted.apply_phase(&phase);
    Ok((magnitude, adjusted))
}
