//! Sampling masks with the calibration geometry they were made for.

use std::io::Write;
use std::path::Path;

use super::header::Header;
use crate::error::{MoccaError, Result};
use crate::sampling::{PatternKind, SamplingPattern};

pub const MASK_MAGIC: &str = "MOCCA-MSK/1";

/// A pattern together with the `M` and `L` that fix its calibration block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskFile {
    pub pattern: SamplingPattern,
    pub equations: usize,
    pub support: usize,
}

impl MaskFile {
    /// Checks that the pattern covers `Λ_{M+L-1}`.
    pub fn new(pattern: SamplingPattern, equations: usize, support: usize) -> Result<Self> {
        let acs = equations + support - 1;
        let pattern = SamplingPattern::with_kind(pattern.n(), pattern.mask().to_vec(), acs, pattern.kind())?;
        Ok(Self { pattern, equations, support })
    }
}

/// Header followed by `N²` bytes, 1 for acquired, in grid order.
pub fn write_mask(w: &mut impl Write, mask: &MaskFile) -> Result<()> {
    let n = mask.pattern.n();
    Header::new(MASK_MAGIC)
        .field("n", n)
        .field("acs_m", mask.equations)
        .field("support_l", mask.support)
        .field("kind", mask.pattern.kind())
        .field("payload_bytes", n * n)
        .write(w)?;
    let payload: Vec<u8> = mask.pattern.mask().iter().map(|&b| b as u8).collect();
    w.write_all(&payload)?;
    Ok(())
}

pub fn read_mask(bytes: &[u8]) -> Result<MaskFile> {
    let (h, payload) = Header::parse(bytes, MASK_MAGIC)?;
    let n = h.get_usize("n")?;
    let equations = h.get_usize("acs_m")?;
    let support = h.get_usize("support_l")?;
    let kind: PatternKind = h.get("kind")?.parse().map_err(|e: MoccaError| MoccaError::Format(e.to_string()))?;
    if h.get_usize("payload_bytes")? != n * n || payload.len() != n * n {
        return Err(MoccaError::Format(format!("mask payload has {} bytes, expected {}", payload.len(), n * n)));
    }
    if equations + support == 0 {
        return Err(MoccaError::Format("calibration block is empty".into()));
    }
    let mask = payload
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(MoccaError::Format(format!("mask byte {other} is neither 0 nor 1"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let pattern = match SamplingPattern::with_kind(n, mask, equations + support - 1, kind) {
        Err(MoccaError::InvalidArgument(msg)) => return Err(MoccaError::Format(msg)),
        other => other?,
    };
    Ok(MaskFile { pattern, equations, support })
}

pub fn save_mask(path: &Path, mask: &MaskFile) -> Result<()> {
    let mut buf = Vec::new();
    write_mask(&mut buf, mask)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_mask(path: &Path) -> Result<MaskFile> {
    read_mask(&std::fs::read(path)?)
}
