use nalgebra::DMatrix;
use num_complex::Complex64;

use super::direct::{group_members, lattice_strides};
use crate::calibration::SensitivitySet;
use crate::error::{MoccaError, Result};
use crate::lattice::GridIndex;
use crate::sampling::SamplingPattern;

/// Group matrices whose smallest singular value falls below this fraction of
/// the largest one over all groups are flagged.
const FLAG_TOL: f64 = 1e-10;

/// Largest image for the dense rank test.
pub const DENSE_RANK_LIMIT: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct GroupDiagnostic {
    pub group_size: usize,
    pub groups: usize,
    /// Smallest singular value of any `N_c × g` group matrix.
    pub min_singular: f64,
    /// Representative pixel of the group attaining `min_singular`.
    pub argmin: GridIndex,
    /// Largest singular value over all groups.
    pub max_singular: f64,
    /// Groups below the relative tolerance.
    pub flagged: usize,
}

impl GroupDiagnostic {
    /// True when every group matrix has full column rank, so `β = 0` is safe.
    pub fn invertible(&self) -> bool {
        self.flagged == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InvertibilityReport {
    Groups(GroupDiagnostic),
    Unavailable(String),
}

/// Per-group rank check for lattice patterns: the `β = 0` system is uniquely
/// solvable exactly when each `N_c × g` matrix of sensitivity values over a
/// coupled group has rank `g`.
pub fn invertibility_diagnostic(sens: &SensitivitySet, pattern: &SamplingPattern) -> InvertibilityReport {
    let (a, b) = match lattice_strides(pattern) {
        Ok(s) => s,
        Err(e) => return InvertibilityReport::Unavailable(format!("diagnostic unavailable: {e}")),
    };
    if sens.n() != pattern.n() {
        return InvertibilityReport::Unavailable("diagnostic unavailable: size mismatch".into());
    }
    let n = pattern.n();
    let grid = pattern.grid();
    let g = a * b;
    let coils = sens.normalized();
    let lo = grid.min();
    let mut sigmas = Vec::with_capacity(n * n / g);
    for r2 in lo..lo + (n / b) as i64 {
        for r1 in lo..lo + (n / a) as i64 {
            let rep = GridIndex::new(r1, r2);
            let pos: Vec<usize> = group_members(pattern, rep)
                .expect("lattice checked")
                .into_iter()
                .map(|i| grid.position(i))
                .collect();
            let m = DMatrix::from_fn(coils.len(), g, |j, t| coils[j].values()[pos[t]]);
            let sv = m.singular_values();
            let top = sv.iter().copied().fold(0.0, f64::max);
            let bottom = if coils.len() < g { 0.0 } else { sv.iter().copied().fold(f64::INFINITY, f64::min) };
            sigmas.push((rep, bottom, top));
        }
    }
    let max_singular = sigmas.iter().map(|s| s.2).fold(0.0, f64::max);
    let (argmin, min_singular, _) = sigmas
        .iter()
        .copied()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("at least one group");
    let flagged = sigmas.iter().filter(|s| s.1 <= FLAG_TOL * max_singular).count();
    InvertibilityReport::Groups(GroupDiagnostic {
        group_size: g,
        groups: sigmas.len(),
        min_singular,
        argmin,
        max_singular,
        flagged,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DenseRank {
    pub rank: usize,
    /// `N²`: the rank needed for a unique solution.
    pub required: usize,
}

impl DenseRank {
    pub fn full(&self) -> bool {
        self.rank == self.required
    }
}

/// Rank of the stacked operator `[P F diag(s̃_j)]_j` for any sampling mask.
/// Dense, so limited to `N <= 16`.
pub fn dense_rank_test(sens: &SensitivitySet, pattern: &SamplingPattern) -> Result<DenseRank> {
    let n = pattern.n();
    if n > DENSE_RANK_LIMIT {
        return Err(MoccaError::UnsupportedPattern(format!(
            "dense rank test is limited to N <= {DENSE_RANK_LIMIT}, got {n}"
        )));
    }
    if sens.n() != n {
        return Err(MoccaError::DimensionMismatch(format!("pattern N={n}, sensitivities N={}", sens.n())));
    }
    let grid = pattern.grid();
    let rows: Vec<GridIndex> = grid.enumerate().filter(|&i| pattern.is_acquired(i)).collect();
    let coils = sens.normalized();
    let cols = n * n;
    let mut op = DMatrix::<Complex64>::zeros(rows.len() * coils.len(), cols);
    let w = -2.0 * std::f64::consts::PI / n as f64;
    for (j, s) in coils.iter().enumerate() {
        for (r, nu) in rows.iter().enumerate() {
            for (p, idx) in grid.enumerate().enumerate() {
                let phase = w * ((nu.n1 * idx.n1 + nu.n2 * idx.n2).rem_euclid(n as i64)) as f64;
                op[(j * rows.len() + r, p)] = Complex64::from_polar(1.0, phase) * s.values()[p];
            }
        }
    }
    let sv = op.singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    let tol = op.nrows().max(cols) as f64 * f64::EPSILON * top;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    Ok(DenseRank { rank, required: cols })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{build_sensitivities, SensitivityCoefficients};
    use crate::image::ComplexImage;
    use crate::sampling::PatternKind;

    fn sens(n: usize, coils: usize, seed: u64) -> SensitivitySet {
        let mut state = seed;
        let stacked: Vec<_> = (0..9 * coils)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                let a = (state >> 33) as f64 / (1u64 << 31) as f64 - 0.5;
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                let b = (state >> 33) as f64 / (1u64 << 31) as f64 - 0.5;
                Complex64::new(a, b)
            })
            .collect();
        build_sensitivities(&SensitivityCoefficients::from_stacked(3, &stacked).unwrap(), n, 1e-8).unwrap()
    }

    fn groups(report: InvertibilityReport) -> GroupDiagnostic {
        match report {
            InvertibilityReport::Groups(g) => g,
            InvertibilityReport::Unavailable(why) => panic!("{why}"),
        }
    }

    #[test]
    fn four_random_coils_are_invertible_on_quarter_lattice() {
        let p = SamplingPattern::new(PatternKind::RowsCols(2, 2), 16, 0).unwrap();
        let d = groups(invertibility_diagnostic(&sens(16, 4, 3), &p));
        assert_eq!(d.group_size, 4);
        assert_eq!(d.groups, 64);
        assert!(d.min_singular > 0.0 && d.invertible());
    }

    #[test]
    fn single_coil_is_flagged() {
        let p = SamplingPattern::new(PatternKind::RowsCols(2, 2), 16, 0).unwrap();
        let d = groups(invertibility_diagnostic(&sens(16, 1, 5), &p));
        assert_eq!(d.min_singular, 0.0);
        assert_eq!(d.flagged, d.groups);
    }

    #[test]
    fn identical_coils_are_flagged() {
        let one = sens(16, 1, 9).normalized()[0].clone();
        let same = SensitivitySet::from_normalized(vec![one; 4]).unwrap();
        let p = SamplingPattern::new(PatternKind::RowsCols(2, 2), 16, 0).unwrap();
        let d = groups(invertibility_diagnostic(&same, &p));
        assert!(!d.invertible());
    }

    #[test]
    fn explicit_pattern_reports_unavailable() {
        let p = SamplingPattern::explicit(8, vec![true; 64], 0).unwrap();
        assert!(matches!(invertibility_diagnostic(&sens(8, 2, 1), &p), InvertibilityReport::Unavailable(_)));
    }

    #[test]
    fn dense_rank_agrees_with_groups() {
        let p = SamplingPattern::new(PatternKind::Columns(2), 8, 0).unwrap();
        let s = sens(8, 2, 13);
        let d = groups(invertibility_diagnostic(&s, &p));
        let r = dense_rank_test(&s, &p).unwrap();
        assert_eq!(r.full(), d.invertible());

        let flat = SensitivitySet::from_normalized(vec![ComplexImage::from_fn(8, |_| Complex64::new(1.0, 0.0))]).unwrap();
        let r = dense_rank_test(&flat, &p).unwrap();
        assert_eq!(r, DenseRank { rank: 32, required: 64 });
    }
}
