//! Cartesian sampling patterns: a regular lattice of acquired rows/columns plus
//! a fully sampled centered calibration block.
//!
//! "Columns" refers to the second coordinate `n2`, "rows" to the first
//! coordinate `n1`. Lattices are anchored at `-N/2`, so with `N` a multiple of
//! twice the stride they always contain the k-space center.

use std::fmt;
use std::str::FromStr;

use crate::error::{MoccaError, Result};
use crate::lattice::{CenteredGrid, GridIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PatternKind {
    /// Every sample acquired.
    Full,
    /// Every `stride`-th column.
    Columns(usize),
    /// Every `row_stride`-th row intersected with every `col_stride`-th column.
    RowsCols(usize, usize),
    /// Arbitrary mask without lattice structure.
    Explicit,
}

impl PatternKind {
    /// `(row_stride, col_stride)` of the regular lattice, if there is one.
    pub fn strides(&self) -> Option<(usize, usize)> {
        match *self {
            PatternKind::Full => Some((1, 1)),
            PatternKind::Columns(s) => Some((1, s)),
            PatternKind::RowsCols(a, b) => Some((a, b)),
            PatternKind::Explicit => None,
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternKind::Full => write!(f, "full"),
            PatternKind::Columns(s) => write!(f, "cols:{s}"),
            PatternKind::RowsCols(a, b) => write!(f, "rows-cols:{a},{b}"),
            PatternKind::Explicit => write!(f, "explicit"),
        }
    }
}

impl FromStr for PatternKind {
    type Err = MoccaError;

    /// Parses `full`, `cols:S`, `rows-cols:A,B` or `explicit`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || MoccaError::InvalidArgument(format!("unrecognized pattern {s:?}"));
        let stride = |t: &str| -> Result<usize> {
            let v: usize = t.trim().parse().map_err(|_| bad())?;
            if v == 0 {
                return Err(bad());
            }
            Ok(v)
        };
        let s = s.trim();
        if s == "full" {
            Ok(PatternKind::Full)
        } else if s == "explicit" {
            Ok(PatternKind::Explicit)
        } else if let Some(rest) = s.strip_prefix("cols:") {
            Ok(PatternKind::Columns(stride(rest)?))
        } else if let Some(rest) = s.strip_prefix("rows-cols:").or_else(|| s.strip_prefix("rows_cols:")) {
            let (a, b) = rest.split_once(',').ok_or_else(bad)?;
            Ok(PatternKind::RowsCols(stride(a)?, stride(b)?))
        } else {
            Err(bad())
        }
    }
}

/// Boolean acquisition mask over `Λ_N` with a guaranteed calibration block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplingPattern {
    n: usize,
    mask: Vec<bool>,
    acs: usize,
    kind: PatternKind,
}

impl SamplingPattern {
    /// Regular lattice of `kind` united with the centered `acs`×`acs` block.
    /// Each stride must divide `N/2`.
    pub fn new(kind: PatternKind, n: usize, acs: usize) -> Result<Self> {
        let grid = CenteredGrid::even(n)?;
        let (a, b) = kind.strides().ok_or_else(|| {
            MoccaError::InvalidArgument("explicit patterns need a mask; use SamplingPattern::explicit".into())
        })?;
        for s in [a, b] {
            if s == 0 || n % (2 * s) != 0 {
                return Err(MoccaError::InvalidArgument(format!(
                    "stride {s} is incompatible with N={n}: N must be a multiple of {}",
                    2 * s.max(1)
                )));
            }
        }
        if acs > n {
            return Err(MoccaError::InvalidArgument(format!(
                "calibration block {acs}x{acs} does not fit into {n}x{n}"
            )));
        }
        let acs_grid = (acs > 0).then(|| CenteredGrid::new(acs).expect("positive"));
        let mask = grid
            .enumerate()
            .map(|idx| {
                lattice_contains(n, a, b, idx) || acs_grid.is_some_and(|g| g.contains(idx))
            })
            .collect();
        Ok(Self { n, mask, acs, kind })
    }

    /// Arbitrary mask; it must cover the centered `acs`×`acs` block.
    pub fn explicit(n: usize, mask: Vec<bool>, acs: usize) -> Result<Self> {
        let grid = CenteredGrid::even(n)?;
        if mask.len() != n * n {
            return Err(MoccaError::DimensionMismatch(format!(
                "mask has {} entries, expected {}",
                mask.len(),
                n * n
            )));
        }
        let pattern = Self { n, mask, acs, kind: PatternKind::Explicit };
        pattern.check_acs(grid)?;
        Ok(pattern)
    }

    /// Re-labels a mask with a lattice kind (used when loading files). The
    /// mask must contain the lattice and the calibration block.
    pub fn with_kind(n: usize, mask: Vec<bool>, acs: usize, kind: PatternKind) -> Result<Self> {
        let mut p = Self::explicit(n, mask, acs)?;
        if let Some((a, b)) = kind.strides() {
            let grid = CenteredGrid::even(n)?;
            for s in [a, b] {
                if s == 0 || n % (2 * s) != 0 {
                    return Err(MoccaError::InvalidArgument(format!("stride {s} is incompatible with N={n}")));
                }
            }
            if let Some(idx) = grid.enumerate().find(|&i| lattice_contains(n, a, b, i) && !p.is_acquired(i)) {
                return Err(MoccaError::Format(format!(
                    "mask claims kind {kind} but lattice sample {:?} is missing",
                    idx.as_tuple()
                )));
            }
        }
        p.kind = kind;
        Ok(p)
    }

    fn check_acs(&self, grid: CenteredGrid) -> Result<()> {
        if self.acs == 0 {
            return Ok(());
        }
        if self.acs > self.n {
            return Err(MoccaError::InvalidArgument(format!("calibration block {} exceeds N={}", self.acs, self.n)));
        }
        let acs_grid = CenteredGrid::new(self.acs)?;
        if let Some(idx) = acs_grid.enumerate().find(|&i| !self.mask[grid.position(i)]) {
            return Err(MoccaError::MissingAcs { index: idx.as_tuple(), size: self.acs });
        }
        Ok(())
    }

    /// The same lattice without the calibration block.
    pub fn regular_lattice(&self) -> Result<SamplingPattern> {
        match self.kind {
            PatternKind::Explicit => {
                Err(MoccaError::UnsupportedPattern("an explicit mask has no regular lattice".into()))
            }
            kind => SamplingPattern::new(kind, self.n, 0),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    /// Side length of the guaranteed fully sampled centered block.
    pub fn acs(&self) -> usize {
        self.acs
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn grid(&self) -> CenteredGrid {
        CenteredGrid::even(self.n).expect("validated on construction")
    }

    pub fn is_acquired(&self, idx: GridIndex) -> bool {
        self.mask[self.grid().position(idx)]
    }

    pub fn acquired_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// `N² / |Λ_P|`.
    pub fn reduction_rate(&self) -> f64 {
        (self.n * self.n) as f64 / self.acquired_count() as f64
    }
}

fn lattice_contains(n: usize, a: usize, b: usize, idx: GridIndex) -> bool {
    let h = (n / 2) as i64;
    (idx.n1 + h) % a as i64 == 0 && (idx.n2 + h) % b as i64 == 0
}
