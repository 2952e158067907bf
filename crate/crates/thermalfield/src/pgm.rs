//! Binary netpbm images: PGM (`P5`) in 8 or 16 bits and PPM (`P6`).
//!
//! 16-bit samples are big-endian as the format requires.

use std::fmt;
use std::path::Path;

use thermalfield_core::thermal::{RawThermalImage, ThermalImage};

use crate::error::{read, write, Error, Result};

/// Decoding failure with the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for PgmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at byte {}: {}", self.offset, self.message)
    }
}

impl std::error::Error for PgmError {}

fn fail<T>(offset: usize, message: impl Into<String>) -> Result<T, PgmError> {
    Err(PgmError {
        offset,
        message: message.into(),
    })
}

/// A decoded grayscale image with its declared maximum value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while let Some(&c) = self.bytes.get(self.pos) {
            if c == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, PgmError> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return fail(start, format!("expected {what}"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map_or_else(|| fail(start, format!("{what} is out of range")), Ok)
    }
}

/// Decodes a binary PGM with any maxval up to 65535.
pub fn decode_pgm(bytes: &[u8]) -> Result<Pgm, PgmError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return fail(0, "missing P5 magic number");
    }
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval_at = h.pos;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return fail(maxval_at, format!("empty image {width}x{height}"));
    }
    if maxval == 0 || maxval > 65535 {
        return fail(maxval_at, format!("maxval {maxval} outside 1..=65535"));
    }
    match bytes.get(h.pos) {
        Some(c) if c.is_ascii_whitespace() => h.pos += 1,
        _ => return fail(h.pos, "expected a single whitespace byte after maxval"),
    }
    let wide = maxval > 255;
    let count = width
        .checked_mul(height)
        .filter(|n| n.checked_mul(2).is_some())
        .map_or_else(|| fail(0, "image dimensions overflow"), Ok)?;
    let need = if wide { 2 * count } else { count };
    let data = &bytes[h.pos..];
    if data.len() < need {
        return fail(
            bytes.len(),
            format!("truncated raster: need {need} bytes, found {}", data.len()),
        );
    }
    let samples: Vec<u16> = if wide {
        data[..need]
            .chunks_exact(2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]))
            .collect()
    } else {
        data[..need].iter().map(|&b| u16::from(b)).collect()
    };
    let step = if wide { 2 } else { 1 };
    if let Some(i) = samples.iter().position(|&s| usize::from(s) > maxval) {
        return fail(
            h.pos + i * step,
            format!("sample {} exceeds maxval {maxval}", samples[i]),
        );
    }
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        samples,
    })
}

/// Strict decoder for raw sensor frames: only 16-bit (maxval 65535) is
/// accepted.
pub fn decode_pgm16(bytes: &[u8]) -> Result<RawThermalImage, PgmError> {
    let pgm = decode_pgm(bytes)?;
    if pgm.maxval != u16::MAX {
        return fail(0, format!("expected a 16-bit image (maxval 65535), found maxval {}", pgm.maxval));
    }
    RawThermalImage::new(pgm.width, pgm.height, pgm.samples).map_err(|e| PgmError {
        offset: 0,
        message: e.to_string(),
    })
}

fn header(magic: &str, width: usize, height: usize, maxval: u32) -> Vec<u8> {
    format!("{magic}\n{width} {height}\n{maxval}\n").into_bytes()
}

pub fn encode_pgm8(width: usize, height: usize, samples: &[u8]) -> Vec<u8> {
    let mut out = header("P5", width, height, 255);
    out.extend_from_slice(samples);
    out
}

pub fn encode_pgm16(width: usize, height: usize, samples: &[u16]) -> Vec<u8> {
    let mut out = header("P5", width, height, 65535);
    out.extend(samples.iter().flat_map(|s| s.to_be_bytes()));
    out
}

pub fn encode_ppm(width: usize, height: usize, pixels: &[[u8; 3]]) -> Vec<u8> {
    let mut out = header("P6", width, height, 255);
    out.extend(pixels.iter().flatten());
    out
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    decode_pgm(&read(path)?).map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_raw_thermal(path: &Path) -> Result<RawThermalImage> {
    decode_pgm16(&read(path)?).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_gray8(path: &Path, img: &ThermalImage) -> Result<()> {
    write(path, &encode_pgm8(img.width(), img.height(), &img.to_gray8()))
}

pub fn write_gray16(path: &Path, img: &ThermalImage) -> Result<()> {
    write(path, &encode_pgm16(img.width(), img.height(), &img.to_gray16()))
}

pub fn write_pseudo_color(path: &Path, img: &ThermalImage) -> Result<()> {
    write(path, &encode_ppm(img.width(), img.height(), &img.to_pseudo_color()))
}
