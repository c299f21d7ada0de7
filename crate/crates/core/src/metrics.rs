//! Image quality measures against a reference magnitude image.

use crate::error::{MoccaError, Result};
use crate::image::RealImage;

const SSIM_RADIUS: usize = 5;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Clip value used for displaying error maps.
pub const DEFAULT_ERROR_CLIP: f64 = 0.12;

fn check(reference: &RealImage, test: &RealImage) -> Result<()> {
    if reference.n() != test.n() {
        return Err(MoccaError::DimensionMismatch(format!(
            "reference is {0}x{0}, test is {1}x{1}",
            reference.n(),
            test.n()
        )));
    }
    Ok(())
}

/// `10 log10(peak² / MSE)` with `peak = max(reference)`; `+∞` for identical
/// images.
pub fn psnr(reference: &RealImage, test: &RealImage) -> Result<f64> {
    check(reference, test)?;
    let peak = reference.max();
    if reference.values().iter().all(|&v| v == 0.0) {
        return Err(MoccaError::Degenerate("reference image is all zero".into()));
    }
    let mse = reference
        .values()
        .iter()
        .zip(test.values())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / reference.values().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_kernel() -> [f64; 2 * SSIM_RADIUS + 1] {
    let mut k = [0.0; 2 * SSIM_RADIUS + 1];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - SSIM_RADIUS as f64;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Half-sample symmetric index: `… c b a | a b c …`.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Separable Gaussian filtering of a column-major `n`×`n` buffer.
fn blur(data: &[f64], n: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; n * n];
    for c in 0..n {
        for i in 0..n {
            tmp[i + n * c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * data[reflect(i as isize + k as isize - r, n) + n * c])
                .sum();
        }
    }
    let mut out = vec![0.0; n * n];
    for c in 0..n {
        for i in 0..n {
            out[i + n * c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[i + n * reflect(c as isize + k as isize - r, n)])
                .sum();
        }
    }
    out
}

/// Mean structural similarity with an 11×11 Gaussian window (σ = 1.5),
/// `K1 = 0.01`, `K2 = 0.03`, dynamic range `max - min` of the reference and
/// symmetric padding. The mean runs over every pixel.
pub fn ssim(reference: &RealImage, test: &RealImage) -> Result<f64> {
    check(reference, test)?;
    let n = reference.n();
    if n < 2 * SSIM_RADIUS + 1 {
        return Err(MoccaError::InvalidArgument(format!("SSIM needs images of at least 11x11, got {n}x{n}")));
    }
    let range = reference.max() - reference.min();
    if !(range > 0.0) {
        return Err(MoccaError::Degenerate("reference has no dynamic range".into()));
    }
    let (c1, c2) = ((SSIM_K1 * range).powi(2), (SSIM_K2 * range).powi(2));
    let k = gaussian_kernel();
    let x = reference.values();
    let y = test.values();
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mx = blur(x, n, &k);
    let my = blur(y, n, &k);
    let mxx = blur(&prod(x, x), n, &k);
    let myy = blur(&prod(y, y), n, &k);
    let mxy = blur(&prod(x, y), n, &k);
    let total: f64 = (0..n * n)
        .map(|p| {
            let (ux, uy) = (mx[p], my[p]);
            let vx = mxx[p] - ux * ux;
            let vy = myy[p] - uy * uy;
            let cxy = mxy[p] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / (n * n) as f64)
}

/// `|test - reference| / max(reference)`, clipped to `[0, clip]`.
pub fn relative_error_map(reference: &RealImage, test: &RealImage, clip: f64) -> Result<RealImage> {
    check(reference, test)?;
    let peak = reference.max();
    if !(peak > 0.0) {
        return Err(MoccaError::Degenerate("reference maximum must be positive".into()));
    }
    let values = reference
        .values()
        .iter()
        .zip(test.values())
        .map(|(a, b)| ((b - a).abs() / peak).min(clip))
        .collect();
    RealImage::from_vec(reference.n(), values)
}

/// All measures for one reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct QualityReport {
    /// dB, `+∞` for exact agreement.
    pub psnr: f64,
    pub ssim: f64,
    /// Unclipped maximum of `|test - reference| / max(reference)`.
    pub max_rel_err: f64,
    /// Error map clipped to `[0, clip]`.
    pub error_map: RealImage,
}

impl QualityReport {
    pub fn compute(reference: &RealImage, test: &RealImage, clip: f64) -> Result<Self> {
        let unclipped = relative_error_map(reference, test, f64::INFINITY)?;
        Ok(Self {
            psnr: psnr(reference, test)?,
            ssim: ssim(reference, test)?,
            max_rel_err: unclipped.max(),
            error_map: relative_error_map(reference, test, clip)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::GridIndex;

    fn fixture() -> (RealImage, RealImage) {
        // i, j in 0..16 are the row and column offsets from the top-left corner
        let at = |idx: GridIndex| ((idx.n1 + 8) as f64, (idx.n2 + 8) as f64);
        let f = |i: f64, j: f64| 0.5 + 0.3 * (0.7 * i).sin() * (0.45 * j).cos() + 0.1 * ((i * j) % 5.0) / 5.0;
        let reference = RealImage::from_fn(16, |idx| {
            let (i, j) = at(idx);
            f(i, j)
        });
        let test = RealImage::from_fn(16, |idx| {
            let (i, j) = at(idx);
            f(i, j) + 0.05 * (1.3 * i + 0.2 * j).cos() + 0.02 * ((i + 2.0 * j) % 3.0)
        });
        (reference, test)
    }

    #[test]
    fn psnr_examples() {
        let ones = RealImage::from_fn(2, |_| 1.0);
        assert_eq!(psnr(&ones, &ones).unwrap(), f64::INFINITY);
        let mut hole = ones.clone();
        hole.values_mut()[3] = 0.0;
        assert!((psnr(&ones, &hole).unwrap() - 10.0 * 4f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn psnr_doubling_error_costs_six_db() {
        let (r, _) = fixture();
        let shift = |e: f64| RealImage::from_vec(16, r.values().iter().map(|v| v + e).collect()).unwrap();
        let a = psnr(&r, &shift(0.01)).unwrap();
        let b = psnr(&r, &shift(0.02)).unwrap();
        assert!((a - b - 20.0 * 2f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn psnr_rejects_zero_reference() {
        let z = RealImage::zeros(4);
        assert!(psnr(&z, &z).is_err());
        assert!(psnr(&z, &RealImage::zeros(2)).is_err());
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let (r, _) = fixture();
        assert!((ssim(&r, &r).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ssim_penalizes_mean_shift() {
        let (r, _) = fixture();
        let shifted = RealImage::from_vec(16, r.values().iter().map(|v| v + 5.0).collect()).unwrap();
        assert!(ssim(&r, &shifted).unwrap() < 0.5);
    }

    #[test]
    fn ssim_matches_reference_implementation() {
        // scipy.ndimage.gaussian_filter (sigma 1.5, radius 5, mode "reflect"),
        // population moments, mean over all pixels
        let (r, t) = fixture();
        assert!((ssim(&r, &t).unwrap() - 0.9593207193281992).abs() < 1e-6);
    }

    #[test]
    fn ssim_rejects_small_and_flat_images() {
        let small = RealImage::from_fn(10, |i| i.n1 as f64);
        assert!(ssim(&small, &small).is_err());
        let flat = RealImage::from_fn(12, |_| 1.0);
        assert!(ssim(&flat, &flat).is_err());
    }

    #[test]
    fn error_map_single_pixel() {
        let (r, _) = fixture();
        let mut t = r.clone();
        t.values_mut()[17] += 0.01;
        let map = relative_error_map(&r, &t, DEFAULT_ERROR_CLIP).unwrap();
        for (p, v) in map.values().iter().enumerate() {
            if p == 17 {
                assert!((v - 0.01 / r.max()).abs() < 1e-12);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
        t.values_mut()[17] += 10.0;
        let map = relative_error_map(&r, &t, DEFAULT_ERROR_CLIP).unwrap();
        assert_eq!(map.max(), DEFAULT_ERROR_CLIP);
        let report = QualityReport::compute(&r, &t, DEFAULT_ERROR_CLIP).unwrap();
        assert!(report.max_rel_err > DEFAULT_ERROR_CLIP);
    }

    #[test]
    fn reflect_is_half_sample_symmetric() {
        let got: Vec<_> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
    }
}
