//! Image and raw-float serialization.
//!
//! Two formats:
//! - binary PGM (P5, maxval 255); writing discretizes to 8-bit,
//! - the `SGF1` raw float container: magic bytes, two little-endian u32
//!   dims (height, width), then row-major little-endian f32 values. The
//!   container doubles as the building block for model files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::imageproc::{discretize, GrayImage, ImageError};
use crate::scalar::Scalar;

pub const SGF_MAGIC: &[u8; 4] = b"SGF1";

pub fn write_pgm<T: Scalar>(path: &Path, img: &GrayImage<T>) -> Result<(), ImageError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_pgm_to(&mut out, img)
}

pub fn write_pgm_to<T: Scalar>(out: &mut impl Write, img: &GrayImage<T>) -> Result<(), ImageError> {
    let rounded = discretize(img);
    write!(out, "P5\n{} {}\n255\n", rounded.width(), rounded.height())?;
    let bytes: Vec<u8> = rounded.pixels().iter().map(|&p| p.to_f64_lossy() as u8).collect();
    out.write_all(&bytes)?;
    Ok(())
}

pub fn read_pgm<T: Scalar>(path: &Path) -> Result<GrayImage<T>, ImageError> {
    let mut reader = BufReader::new(File::open(path)?);
    read_pgm_from(&mut reader)
}

pub fn read_pgm_from<T: Scalar>(input: &mut impl Read) -> Result<GrayImage<T>, ImageError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(ImageError::Format("not a binary PGM (P5) file".into()));
    }
    // Header: magic, width, height, maxval; whitespace separated with
    // optional '#' comment lines.
    let mut pos = 2;
    let mut fields = Vec::with_capacity(3);
    while fields.len() < 3 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::Format("truncated PGM header".into()));
        }
        let field = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| ImageError::Format("non-ascii PGM header".into()))?;
        let value: usize = field.parse().map_err(|_| ImageError::Format(format!("bad PGM header field: {field}")))?;
        fields.push(value);
    }
    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 {
        return Err(ImageError::Format(format!("unsupported PGM maxval {maxval}")));
    }
    pos += 1; // single whitespace after maxval
    let expected = height * width;
    if bytes.len() < pos + expected {
        return Err(ImageError::Format("truncated PGM pixel data".into()));
    }
    let pixels = bytes[pos..pos + expected].iter().map(|&b| T::cast(b as f64)).collect();
    GrayImage::new(height, width, pixels)
}

/// Writes one `SGF1` block: dims then f32 data.
pub fn write_sgf_block<T: Scalar>(out: &mut impl Write, height: usize, width: usize, data: &[T]) -> Result<(), ImageError> {
    assert_eq!(data.len(), height * width, "sgf block: data length mismatch");
    out.write_all(SGF_MAGIC)?;
    out.write_all(&(height as u32).to_le_bytes())?;
    out.write_all(&(width as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(data.len() * 4);
    for &v in data {
        buf.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads one `SGF1` block, returning `(height, width, data)`.
pub fn read_sgf_block<T: Scalar>(input: &mut impl Read) -> Result<(usize, usize, Vec<T>), ImageError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != SGF_MAGIC {
        return Err(ImageError::Format("missing SGF1 magic".into()));
    }
    let mut dim = [0u8; 4];
    input.read_exact(&mut dim)?;
    let height = u32::from_le_bytes(dim) as usize;
    input.read_exact(&mut dim)?;
    let width = u32::from_le_bytes(dim) as usize;
    let count = height
        .checked_mul(width)
        .ok_or_else(|| ImageError::Format("SGF1 dims overflow".into()))?;
    let mut buf = vec![0u8; count * 4];
    input.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(4)
        .map(|c| T::cast(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    Ok((height, width, data))
}

pub fn write_sgf_image<T: Scalar>(path: &Path, img: &GrayImage<T>) -> Result<(), ImageError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_sgf_block(&mut out, img.height(), img.width(), img.pixels())
}

pub fn read_sgf_image<T: Scalar>(path: &Path) -> Result<GrayImage<T>, ImageError> {
    let mut reader = BufReader::new(File::open(path)?);
    let (height, width, data) = read_sgf_block(&mut reader)?;
    GrayImage::new(height, width, data)
}
