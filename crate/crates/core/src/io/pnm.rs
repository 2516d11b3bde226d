//! Portable graymap/pixmap reading and writing.
//!
//! Reads the ASCII (`P2`/`P3`) and binary (`P5`/`P6`) variants with 8-bit
//! samples; writes the binary variants with an optional provenance comment.
//! Sample values map to `[0, 1]` by division with the header's maximum.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::Array;

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("image i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a supported graymap/pixmap (magic {0:?})")]
    BadMagic(String),
    #[error("expected {expected} at byte offset {offset}")]
    Malformed { offset: usize, expected: &'static str },
    #[error("unsupported maximum sample value {0} (supported: 1..=255)")]
    UnsupportedMaxValue(u32),
    #[error("payload truncated at byte offset {offset}: need {needed} more bytes")]
    TruncatedPayload { offset: usize, needed: usize },
    #[error("sample value {value} exceeds the declared maximum {max}")]
    SampleOutOfRange { value: u32, max: u32 },
}

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn skip_separators(&mut self) {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                return;
            }
        }
    }

    fn token(&mut self, expected: &'static str) -> Result<&'a [u8], PnmError> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(PnmError::Malformed { offset: start, expected });
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn uint(&mut self, expected: &'static str) -> Result<u32, PnmError> {
        let offset = self.pos;
        let tok = self.token(expected)?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(PnmError::Malformed { offset, expected })
    }
}

/// Parses a PNM byte buffer into a `[C,H,W]` array with values in `[0, 1]`.
pub fn parse<T: Scalar>(bytes: &[u8]) -> Result<Array<T>, PnmError> {
    let mut s = Scanner { bytes, pos: 0 };
    let magic = s.token("magic number")?.to_vec();
    let (channels, binary) = match magic.as_slice() {
        b"P2" => (1usize, false),
        b"P3" => (3, false),
        b"P5" => (1, true),
        b"P6" => (3, true),
        other => return Err(PnmError::BadMagic(String::from_utf8_lossy(other).into_owned())),
    };
    let width = s.uint("width")? as usize;
    let height = s.uint("height")? as usize;
    let max = s.uint("maximum sample value")?;
    if max == 0 || max > 255 {
        return Err(PnmError::UnsupportedMaxValue(max));
    }
    let count = width * height * channels;
    let samples: Vec<u32> = if binary {
        // A single whitespace byte separates the header from the payload.
        if s.pos >= bytes.len() || !bytes[s.pos].is_ascii_whitespace() {
            return Err(PnmError::Malformed { offset: s.pos, expected: "header terminator" });
        }
        s.pos += 1;
        let payload = &bytes[s.pos..];
        if payload.len() < count {
            return Err(PnmError::TruncatedPayload {
                offset: bytes.len(),
                needed: count - payload.len(),
            });
        }
        payload[..count].iter().map(|&b| b as u32).collect()
    } else {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push(s.uint("sample value")?);
        }
        out
    };
    for &v in &samples {
        if v > max {
            return Err(PnmError::SampleOutOfRange { value: v, max });
        }
    }
    // Interleaved samples become planar channels.
    let scale = T::of_usize(max as usize);
    let mut data = vec![T::zero(); count];
    for (i, &v) in samples.iter().enumerate() {
        let (pixel, ch) = (i / channels, i % channels);
        data[ch * width * height + pixel] = T::of_usize(v as usize) / scale;
    }
    Ok(Array::new(vec![channels, height, width], data))
}

pub fn read_image<T: Scalar>(path: &Path) -> Result<Array<T>, PnmError> {
    parse(&fs::read(path)?)
}

/// 8-bit quantization of a unit-interval value, rounding half up.
pub fn quantize_unit<T: Scalar>(v: T) -> u8 {
    let clamped = v.max(T::zero()).min(T::one());
    let scaled = (clamped * T::of(255.0) + T::of(0.5)).floor();
    scaled.to_u8().unwrap_or(255)
}

fn header(magic: &str, width: usize, height: usize, comment: Option<&str>) -> Vec<u8> {
    let mut out = String::new();
    out.push_str(magic);
    out.push('\n');
    if let Some(c) = comment {
        out.push_str("# ");
        out.push_str(&c.replace(['\n', '\r'], " "));
        out.push('\n');
    }
    out.push_str(&format!("{width} {height}\n255\n"));
    out.into_bytes()
}

/// Writes a `[H,W]` (or `[1,H,W]`) array in `[0, 1]` as a binary graymap.
pub fn write_pgm<T: Scalar>(path: &Path, map: &Array<T>, comment: Option<&str>) -> Result<(), PnmError> {
    let (h, w) = match map.shape() {
        [h, w] => (*h, *w),
        [1, h, w] => (*h, *w),
        _ => panic!("write_pgm expects a single-channel map, got shape {:?}", map.shape()),
    };
    let mut bytes = header("P5", w, h, comment);
    bytes.extend(map.data().iter().map(|&v| quantize_unit(v)));
    Ok(fs::write(path, bytes)?)
}

/// Writes a `[3,H,W]` array in `[0, 1]` as a binary pixmap.
pub fn write_ppm<T: Scalar>(path: &Path, image: &Array<T>, comment: Option<&str>) -> Result<(), PnmError> {
    let (c, h, w) = match image.shape() {
        [3, h, w] => (3usize, *h, *w),
        _ => panic!("write_ppm expects a [3,H,W] image, got shape {:?}", image.shape()),
    };
    let mut bytes = header("P6", w, h, comment);
    for p in 0..h * w {
        for ch in 0..c {
            bytes.push(quantize_unit(image.data()[ch * h * w + p]));
        }
    }
    Ok(fs::write(path, bytes)?)
}
