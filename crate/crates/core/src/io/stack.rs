//! Complex multi-coil stacks (k-space data, sensitivities, complex images).

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use super::header::Header;
use crate::calibration::KSpaceStack;
use crate::error::{MoccaError, Result};
use crate::image::ComplexImage;

pub const STACK_MAGIC: &str = "MOCCA-KSP/1";
const LAYOUT: &str = "column-major-centered";
const SAMPLE_FORMAT: &str = "complex-f64-le-re-im";

/// Serializes coils in order, each in grid vectorization order, every sample
/// as two little-endian `f64` (real, imaginary).
pub fn write_stack(w: &mut impl Write, coils: &[ComplexImage]) -> Result<()> {
    let n = coils.first().map_or(0, ComplexImage::n);
    if coils.is_empty() || coils.iter().any(|c| c.n() != n) {
        return Err(MoccaError::DimensionMismatch("a stack needs coils of one common size".into()));
    }
    Header::new(STACK_MAGIC)
        .field("n", n)
        .field("coils", coils.len())
        .field("layout", LAYOUT)
        .field("sample_format", SAMPLE_FORMAT)
        .field("payload_bytes", 16 * n * n * coils.len())
        .write(w)?;
    let mut payload = Vec::with_capacity(16 * n * n * coils.len());
    for c in coils {
        for v in c.values() {
            payload.extend_from_slice(&v.re.to_le_bytes());
            payload.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    w.write_all(&payload)?;
    Ok(())
}

pub fn read_stack(bytes: &[u8]) -> Result<Vec<ComplexImage>> {
    let (h, payload) = Header::parse(bytes, STACK_MAGIC)?;
    let n = h.get_usize("n")?;
    let coils = h.get_usize("coils")?;
    h.expect("layout", LAYOUT)?;
    h.expect("sample_format", SAMPLE_FORMAT)?;
    let expected = 16 * n * n * coils;
    if h.get_usize("payload_bytes")? != expected || payload.len() != expected {
        return Err(MoccaError::Format(format!(
            "payload has {} bytes, expected {expected}",
            payload.len()
        )));
    }
    if n == 0 || coils == 0 {
        return Err(MoccaError::Format("empty stack".into()));
    }
    let f = |b: &[u8]| f64::from_le_bytes(b.try_into().expect("8 bytes"));
    payload
        .chunks(16 * n * n)
        .map(|chunk| {
            let values = chunk.chunks(16).map(|s| Complex64::new(f(&s[..8]), f(&s[8..]))).collect();
            ComplexImage::from_vec(n, values)
        })
        .collect()
}

pub fn save_stack(path: &Path, coils: &[ComplexImage]) -> Result<()> {
    let mut buf = Vec::new();
    write_stack(&mut buf, coils)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_stack(path: &Path) -> Result<Vec<ComplexImage>> {
    read_stack(&std::fs::read(path)?)
}

pub fn load_kspace(path: &Path) -> Result<KSpaceStack> {
    KSpaceStack::new(load_stack(path)?).map_err(|e| MoccaError::Format(e.to_string()))
}
