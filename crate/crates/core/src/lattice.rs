//! Centered square index sets and the vectorization order used everywhere.
//!
//! A grid of size `M` covers `{-⌊M/2⌋, …, ⌊(M-1)/2⌋}` on both axes. For an
//! even image size `N` this is `{-N/2, …, N/2-1}`; for an odd support size
//! `L = 2n+1` it is the symmetric range `{-n, …, n}`.
//!
//! Every vector indexed by a grid stores its entries column-major: the second
//! coordinate `n2` is the slow index and `n1` the fast one.

use crate::error::{MoccaError, Result};

/// A point of a centered grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridIndex {
    pub n1: i64,
    pub n2: i64,
}

impl GridIndex {
    pub const ORIGIN: GridIndex = GridIndex { n1: 0, n2: 0 };

    pub const fn new(n1: i64, n2: i64) -> Self {
        Self { n1, n2 }
    }

    pub fn offset(self, d1: i64, d2: i64) -> Self {
        Self::new(self.n1 + d1, self.n2 + d2)
    }

    pub fn as_tuple(self) -> (i64, i64) {
        (self.n1, self.n2)
    }
}

impl From<(i64, i64)> for GridIndex {
    fn from((n1, n2): (i64, i64)) -> Self {
        Self::new(n1, n2)
    }
}

/// Centered `size`×`size` index set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CenteredGrid {
    size: usize,
}

impl CenteredGrid {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(MoccaError::InvalidArgument("grid size must be positive".into()));
        }
        Ok(Self { size })
    }

    /// Full image grid; `size` must be even.
    pub fn even(size: usize) -> Result<Self> {
        if size == 0 || size % 2 != 0 {
            return Err(MoccaError::InvalidArgument(format!(
                "image grid size must be even and positive, got {size}"
            )));
        }
        Ok(Self { size })
    }

    /// Support grid `{-n, …, n}²` of odd size `2n+1`.
    pub fn odd(size: usize) -> Result<Self> {
        if size % 2 != 1 {
            return Err(MoccaError::InvalidArgument(format!(
                "support size must be odd, got {size}"
            )));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn min(&self) -> i64 {
        -((self.size / 2) as i64)
    }

    pub fn max(&self) -> i64 {
        ((self.size - 1) / 2) as i64
    }

    /// Number of points in the 2-D set.
    pub fn len(&self) -> usize {
        self.size * self.size
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, idx: GridIndex) -> bool {
        let (lo, hi) = (self.min(), self.max());
        (lo..=hi).contains(&idx.n1) && (lo..=hi).contains(&idx.n2)
    }

    /// Position of `idx` in the column-major vectorization.
    #[inline]
    pub fn position(&self, idx: GridIndex) -> usize {
        debug_assert!(self.contains(idx), "{idx:?} outside grid of size {}", self.size);
        let lo = self.min();
        (idx.n1 - lo) as usize + self.size * (idx.n2 - lo) as usize
    }

    /// Inverse of [`CenteredGrid::position`].
    #[inline]
    pub fn index_at(&self, pos: usize) -> GridIndex {
        let lo = self.min();
        GridIndex::new(lo + (pos % self.size) as i64, lo + (pos / self.size) as i64)
    }

    /// All points in vectorization order (`n2` outer, `n1` inner).
    pub fn enumerate(self) -> impl Iterator<Item = GridIndex> {
        let lo = self.min();
        let hi = self.max();
        (lo..=hi).flat_map(move |n2| (lo..=hi).map(move |n1| GridIndex::new(n1, n2)))
    }
}

/// Reduces `v` modulo `n` on both axes into `{-n/2, …, n/2-1}`.
pub fn centered_mod(v: (i64, i64), n: usize) -> Result<GridIndex> {
    if n < 2 || n % 2 != 0 {
        return Err(MoccaError::InvalidArgument(format!(
            "centered modulus needs an even size >= 2, got {n}"
        )));
    }
    Ok(wrap(GridIndex::new(v.0, v.1), n))
}

/// Unchecked variant of [`centered_mod`] for hot loops; `n` must be even.
#[inline]
pub(crate) fn wrap(v: GridIndex, n: usize) -> GridIndex {
    let n = n as i64;
    let h = n / 2;
    GridIndex::new((v.n1 + h).rem_euclid(n) - h, (v.n2 + h).rem_euclid(n) - h)
}
