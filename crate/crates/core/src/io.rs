//! On-disk formats: raw little-endian `f64` payloads (`.bin`) with a JSON
//! sidecar (`.json`) describing shape and content, lattice JSON, and 8-bit
//! PGM previews.
//!
//! Stacks are stored frame-major, row-major; complex values interleave
//! `re, im`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{PtychoError, Result};
use crate::field::{ComplexField, C64};
use crate::lattice::ScanLattice;
use crate::transform::{ComplexStack, RealStack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Content {
    Intensity,
    Magnitude,
    Complex,
}

/// Sidecar of a stored stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackHeader {
    #[serde(rename = "J")]
    pub frames: usize,
    pub frame_side: usize,
    pub dtype: String,
    pub layout: String,
    pub content: Content,
}

/// Sidecar of a stored 2-D field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub layout: String,
    pub content: Content,
}

const DTYPE: &str = "f64";
const STACK_LAYOUT: &str = "frame-major row-major";
const FIELD_LAYOUT: &str = "row-major";

/// `name.bin` and `name.json` for a base path.
pub fn pair_paths(base: &Path) -> (PathBuf, PathBuf) {
    (base.with_extension("bin"), base.with_extension("json"))
}

fn encode(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(f64::to_le_bytes).collect()
}

fn decode(bytes: &[u8], expected: usize, path: &Path) -> Result<Vec<f64>> {
    if bytes.len() != expected * 8 {
        return Err(PtychoError::Data(format!(
            "{}: expected {} bytes, found {}",
            path.display(),
            expected * 8,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn interleave(values: &[C64]) -> impl Iterator<Item = f64> + '_ {
    values.iter().flat_map(|z| [z.re, z.im])
}

fn deinterleave(raw: &[f64]) -> Vec<C64> {
    raw.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| PtychoError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| PtychoError::Data(format!("{}: {e}", path.display())))
}

fn read_payload(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| PtychoError::Data(format!("cannot read {}: {e}", path.display())))
}

fn check_header(dtype: &str, layout: &str, want_layout: &str, path: &Path) -> Result<()> {
    if dtype != DTYPE || layout != want_layout {
        return Err(PtychoError::Data(format!(
            "{}: unsupported dtype/layout '{dtype}'/'{layout}'",
            path.display()
        )));
    }
    Ok(())
}

/// Writes a real stack (intensities or magnitudes) next to its sidecar.
pub fn write_real_stack(base: &Path, stack: &RealStack, content: Content) -> Result<()> {
    if content == Content::Complex {
        return Err(PtychoError::Config("a real stack cannot be stored as complex content".into()));
    }
    let (bin, json) = pair_paths(base);
    let header = StackHeader {
        frames: stack.frames(),
        frame_side: stack.side(),
        dtype: DTYPE.into(),
        layout: STACK_LAYOUT.into(),
        content,
    };
    fs::write(&bin, encode(stack.as_slice().iter().copied()))?;
    write_json(&json, &header)
}

pub fn read_real_stack(base: &Path) -> Result<(RealStack, Content)> {
    let (bin, json) = pair_paths(base);
    let header: StackHeader = read_json(&json)?;
    check_header(&header.dtype, &header.layout, STACK_LAYOUT, &json)?;
    if header.content == Content::Complex {
        return Err(PtychoError::Data(format!("{}: holds complex frames, expected real", json.display())));
    }
    let n = header.frames * header.frame_side * header.frame_side;
    let raw = decode(&read_payload(&bin)?, n, &bin)?;
    Ok((RealStack::from_vec(header.frames, header.frame_side, raw)?, header.content))
}

pub fn write_complex_stack(base: &Path, stack: &ComplexStack) -> Result<()> {
    let (bin, json) = pair_paths(base);
    let header = StackHeader {
        frames: stack.frames(),
        frame_side: stack.side(),
        dtype: DTYPE.into(),
        layout: STACK_LAYOUT.into(),
        content: Content::Complex,
    };
    fs::write(&bin, encode(interleave(stack.as_slice())))?;
    write_json(&json, &header)
}

pub fn read_complex_stack(base: &Path) -> Result<ComplexStack> {
    let (bin, json) = pair_paths(base);
    let header: StackHeader = read_json(&json)?;
    check_header(&header.dtype, &header.layout, STACK_LAYOUT, &json)?;
    if header.content != Content::Complex {
        return Err(PtychoError::Data(format!("{}: holds real frames, expected complex", json.display())));
    }
    let n = header.frames * header.frame_side * header.frame_side;
    let raw = decode(&read_payload(&bin)?, 2 * n, &bin)?;
    ComplexStack::from_vec(header.frames, header.frame_side, deinterleave(&raw))
}

pub fn write_field(base: &Path, field: &ComplexField) -> Result<()> {
    let (bin, json) = pair_paths(base);
    let header = FieldHeader {
        rows: field.rows(),
        cols: field.cols(),
        dtype: DTYPE.into(),
        layout: FIELD_LAYOUT.into(),
        content: Content::Complex,
    };
    fs::write(&bin, encode(interleave(field.as_slice())))?;
    write_json(&json, &header)
}

pub fn read_field(base: &Path) -> Result<ComplexField> {
    let (bin, json) = pair_paths(base);
    let header: FieldHeader = read_json(&json)?;
    check_header(&header.dtype, &header.layout, FIELD_LAYOUT, &json)?;
    if header.content != Content::Complex {
        return Err(PtychoError::Data(format!("{}: expected complex field content", json.display())));
    }
    let raw = decode(&read_payload(&bin)?, 2 * header.rows * header.cols, &bin)?;
    ComplexField::new(header.rows, header.cols, deinterleave(&raw))
}

pub fn write_lattice(path: &Path, lattice: &ScanLattice) -> Result<()> {
    let mut text = lattice.to_json()?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_lattice(path: &Path) -> Result<ScanLattice> {
    let text = fs::read_to_string(path)
        .map_err(|e| PtychoError::Data(format!("cannot read {}: {e}", path.display())))?;
    ScanLattice::from_json(&text).map_err(|e| PtychoError::Data(format!("{}: {e}", path.display())))
}

/// Range mapped onto `0..=255` by a PGM preview.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgmScale {
    pub min: f64,
    pub max: f64,
}

/// Writes `values` (row-major) as a binary 8-bit PGM, linearly rescaled from
/// their own min/max. A constant image maps to 0.
pub fn write_pgm(path: &Path, values: &[f64], rows: usize, cols: usize) -> Result<PgmScale> {
    if values.len() != rows * cols {
        return Err(crate::error::shape_err("pgm pixels", rows * cols, values.len()));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !min.is_finite() || !max.is_finite() {
        return Err(PtychoError::Data("cannot render non-finite values".into()));
    }
    let span = max - min;
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        if span > 0.0 {
            ((v - min) / span * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    fs::write(path, out)?;
    Ok(PgmScale { min, max })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stack_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("f");
        let s = RealStack::from_vec(2, 2, vec![0.0, 1.5, -0.0, 3.25, 1e-300, 7.0, 8.0, f64::MAX]).unwrap();
        write_real_stack(&base, &s, Content::Intensity).unwrap();
        let (back, content) = read_real_stack(&base).unwrap();
        assert_eq!(content, Content::Intensity);
        assert_eq!(back, s);
        let sidecar = std::fs::read_to_string(base.with_extension("json")).unwrap();
        assert!(sidecar.contains("\"J\": 2") && sidecar.contains("frame-major row-major"));
    }

    #[test]
    fn field_bytes_are_interleaved_le() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("w");
        let f = ComplexField::new(1, 2, vec![C64::new(1.0, -2.0), C64::new(0.5, 0.25)]).unwrap();
        write_field(&base, &f).unwrap();
        let bytes = std::fs::read(base.with_extension("bin")).unwrap();
        assert_eq!(bytes.len(), 32);
        assert_eq!(&bytes[8..16], &(-2.0f64).to_le_bytes());
        assert_eq!(read_field(&base).unwrap(), f);
    }

    #[test]
    fn truncated_payload_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("z");
        let s = ComplexStack::from_vec(1, 1, vec![C64::new(1.0, 1.0)]).unwrap();
        write_complex_stack(&base, &s).unwrap();
        std::fs::write(base.with_extension("bin"), [0u8; 12]).unwrap();
        assert!(matches!(read_complex_stack(&base), Err(PtychoError::Data(_))));
        assert!(matches!(read_real_stack(&base), Err(PtychoError::Data(_))));
    }

    #[test]
    fn pgm_header_and_scale() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        let scale = write_pgm(&p, &[1.0, 2.0, 3.0, 5.0], 2, 2).unwrap();
        assert_eq!(scale, PgmScale { min: 1.0, max: 5.0 });
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 64, 128, 255]);
    }
}
