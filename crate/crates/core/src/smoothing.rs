//! One-step nonlinear local smoothing with the Perona-Malik diffusivity.
//!
//! Each pixel moves towards its 8-neighbourhood:
//!
//! ```text
//! m_n ← m_n + τ_n Σ_r g(|m_n - m_{n-r}|) / w_r · (m_{n-r} - m_n)
//! ```
//!
//! with `g(s) = 1/(1 + s²/λ)` and `τ_n = (Σ_r 1/w_r)⁻¹`. Neighbours outside
//! the image are skipped and `τ_n` is recomputed over the remaining ones, so
//! every output is a convex combination of the input pixel and its
//! neighbours.

use crate::error::{MoccaError, Result};
use crate::image::RealImage;
use crate::sampling::PatternKind;

const OFFSETS: [(i64, i64); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// How a neighbour at offset `r` from pixel `n` is weighted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NeighborWeights {
    /// `w_r = ‖r‖²`: 1 for axial and 2 for diagonal neighbours.
    #[default]
    SquaredOffset,
    /// `w = ‖n - r‖²` with `n` in centered coordinates. Terms with zero
    /// weight are dropped. Only useful for comparison.
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingConfig {
    /// Contrast parameter of the diffusivity, `λ > 0`.
    pub lambda: f64,
    pub steps: usize,
    pub weights: NeighborWeights,
}

impl SmoothingConfig {
    pub fn new(lambda: f64) -> Self {
        Self { lambda, steps: 1, weights: NeighborWeights::SquaredOffset }
    }
}

/// Image sets for which tuned `λ` values are known.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PresetTable {
    /// 8 coils, 200×200.
    #[default]
    Brain8,
    /// 8 of 32 coils, 192×192.
    Brain32,
}

/// Tuned `λ` for a sampling scheme, if one is known.
pub fn lambda_preset(kind: PatternKind, table: PresetTable) -> Option<f64> {
    use PatternKind::*;
    match (table, kind) {
        (PresetTable::Brain8, Columns(2)) => Some(0.00045),
        (PresetTable::Brain8, Columns(3) | Columns(4)) => Some(0.0018),
        (PresetTable::Brain8, RowsCols(2, 2)) => Some(0.0015),
        (PresetTable::Brain8, RowsCols(2, 3)) => Some(0.0035),
        (PresetTable::Brain32, Columns(2)) => Some(0.00015),
        (PresetTable::Brain32, Columns(3) | RowsCols(2, 2)) => Some(0.0005),
        (PresetTable::Brain32, Columns(4) | RowsCols(2, 3)) => Some(0.0013),
        _ => None,
    }
}

/// Perona-Malik diffusivity `1/(1 + s²/λ)`.
pub fn diffusivity(s: f64, lambda: f64) -> f64 {
    1.0 / (1.0 + s * s / lambda)
}

/// Applies `cfg.steps` smoothing steps.
pub fn smooth_step(m: &RealImage, cfg: &SmoothingConfig) -> Result<RealImage> {
    if !(cfg.lambda > 0.0) {
        return Err(MoccaError::InvalidArgument(format!("lambda must be positive, got {}", cfg.lambda)));
    }
    let mut cur = m.clone();
    for _ in 0..cfg.steps {
        cur = single_step(&cur, cfg);
    }
    Ok(cur)
}

fn single_step(m: &RealImage, cfg: &SmoothingConfig) -> RealImage {
    let grid = m.grid();
    let v = m.values();
    let mut out = vec![0.0; v.len()];
    for (p, n) in grid.enumerate().enumerate() {
        let center = v[p];
        let mut inv_weight_sum = 0.0;
        let mut flux = 0.0;
        for &(d1, d2) in &OFFSETS {
            let nb = n.offset(-d1, -d2);
            if !grid.contains(nb) {
                continue;
            }
            let w = match cfg.weights {
                NeighborWeights::SquaredOffset => (d1 * d1 + d2 * d2) as f64,
                NeighborWeights::Literal => ((n.n1 - d1).pow(2) + (n.n2 - d2).pow(2)) as f64,
            };
            if w == 0.0 {
                continue;
            }
            let other = v[grid.position(nb)];
            inv_weight_sum += 1.0 / w;
            flux += diffusivity((center - other).abs(), cfg.lambda) / w * (other - center);
        }
        out[p] = if inv_weight_sum > 0.0 { center + flux / inv_weight_sum } else { center };
    }
    RealImage::from_vec(m.n(), out).expect("same size")
}
