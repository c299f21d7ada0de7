//! 16-bit binary graymaps for final magnitude images.
//!
//! Rows run over `n1` from top to bottom and columns over `n2` from left to
//! right. Values in `[0, max]` map linearly onto `0..=65535`.

use std::io::Write;
use std::path::Path;

use crate::error::{MoccaError, Result};
use crate::image::RealImage;

const MAXVAL: u32 = 65535;

pub fn write_pgm(w: &mut impl Write, image: &RealImage) -> Result<()> {
    let n = image.n();
    let max = image.max();
    write!(w, "P5\n{n} {n}\n{MAXVAL}\n")?;
    let mut payload = Vec::with_capacity(2 * n * n);
    for row in 0..n {
        for col in 0..n {
            let v = image.values()[row + n * col];
            let code = if max > 0.0 { (v.max(0.0) / max * MAXVAL as f64).round() as u16 } else { 0 };
            payload.extend_from_slice(&code.to_be_bytes());
        }
    }
    w.write_all(&payload)?;
    Ok(())
}

fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < bytes.len() && (bytes[*pos].is_ascii_whitespace() || bytes[*pos] == b'#') {
        if bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            *pos += 1;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| MoccaError::Format("bad PGM header".into()))
}

/// Reads a square P5 image; pixel values become `code / maxval`.
pub fn read_pgm(bytes: &[u8]) -> Result<RealImage> {
    let mut pos = 0;
    if token(bytes, &mut pos)? != "P5" {
        return Err(MoccaError::Format("not a binary PGM (P5) file".into()));
    }
    let mut num = |what: &str| -> Result<usize> {
        let t = token(bytes, &mut pos)?;
        t.parse().map_err(|_| MoccaError::Format(format!("bad PGM {what}: {t:?}")))
    };
    let (width, height, maxval) = (num("width")?, num("height")?, num("maxval")?);
    if width != height || width == 0 {
        return Err(MoccaError::Format(format!("expected a square image, got {width}x{height}")));
    }
    if maxval == 0 || maxval > MAXVAL as usize {
        return Err(MoccaError::Format(format!("unsupported maxval {maxval}")));
    }
    pos += 1;
    let n = width;
    let depth = if maxval < 256 { 1 } else { 2 };
    let payload = bytes.get(pos..).unwrap_or_default();
    if payload.len() != depth * n * n {
        return Err(MoccaError::Format(format!("PGM payload has {} bytes, expected {}", payload.len(), depth * n * n)));
    }
    let mut values = vec![0.0; n * n];
    for row in 0..n {
        for col in 0..n {
            let k = depth * (col + n * row);
            let code = if depth == 1 { payload[k] as u32 } else { u16::from_be_bytes([payload[k], payload[k + 1]]) as u32 };
            values[row + n * col] = code as f64 / maxval as f64;
        }
    }
    RealImage::from_vec(n, values)
}

pub fn save_pgm(path: &Path, image: &RealImage) -> Result<()> {
    let mut buf = Vec::new();
    write_pgm(&mut buf, image)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_pgm(path: &Path) -> Result<RealImage> {
    read_pgm(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::GridIndex;

    #[test]
    fn layout_and_scaling() {
        // 2x2: n1 = -1 is the top row
        let img = RealImage::from_fn(2, |i| match (i.n1, i.n2) {
            (-1, -1) => 1.0,
            (-1, 0) => 0.5,
            (0, -1) => 0.0,
            _ => 0.25,
        });
        let mut buf = Vec::new();
        write_pgm(&mut buf, &img).unwrap();
        assert_eq!(&buf[..15], b"P5\n2 2\n65535\n\xff\xff");
        assert_eq!(&buf[15..], &[0x80, 0x00, 0x00, 0x00, 0x40, 0x00]);
        let back = read_pgm(&buf).unwrap();
        assert!((back.get(GridIndex::new(-1, 0)) - 32768.0 / 65535.0).abs() < 1e-15);
    }

    #[test]
    fn byte_exact_roundtrip() {
        let img = RealImage::from_fn(6, |i| ((i.n1 * 7 + i.n2 * 3).rem_euclid(11)) as f64 / 3.0);
        let mut first = Vec::new();
        write_pgm(&mut first, &img).unwrap();
        let mut second = Vec::new();
        write_pgm(&mut second, &read_pgm(&first).unwrap()).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn rejects_other_formats() {
        assert!(read_pgm(b"P2\n2 2\n255\n").is_err());
        assert!(read_pgm(b"P5\n2 3\n255\n\0\0\0\0\0\0").is_err());
        assert!(read_pgm(b"P5\n2 2\n255\n\0\0\0").is_err());
        let img = read_pgm(b"P5\n# comment\n2 2\n255\n\0\xff\0\0").unwrap();
        assert_eq!(img.max(), 1.0);
    }
}
