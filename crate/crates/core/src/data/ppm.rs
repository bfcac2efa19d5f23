//! Binary PPM (P6, maxval 255) decoding and encoding.
//!
//! This is the only image codec in the pipeline; anything else is expected
//! to be converted to P6 beforehand. Encoding uses a fixed header layout so
//! that identical pixels always produce identical bytes.

use std::path::Path;

use super::{DataError, RgbImage};

/// Decodes a binary "P6" PPM with maxval 255.
pub fn decode_ppm(path: &Path) -> Result<RgbImage, DataError> {
    let bytes = std::fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_ppm_bytes(&bytes, path)
}

pub(crate) fn decode_ppm_bytes(bytes: &[u8], path: &Path) -> Result<RgbImage, DataError> {
    let mut cursor = Cursor { bytes, pos: 0 };
    let magic = cursor.token().ok_or_else(|| header_err(path, "missing magic"))?;
    if magic != b"P6" {
        return Err(DataError::PpmMagic {
            path: path.to_path_buf(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let width = cursor
        .unsigned()
        .ok_or_else(|| header_err(path, "missing or invalid width"))?;
    let height = cursor
        .unsigned()
        .ok_or_else(|| header_err(path, "missing or invalid height"))?;
    let maxval = cursor
        .unsigned()
        .ok_or_else(|| header_err(path, "missing or invalid maxval"))?;
    if maxval != 255 {
        return Err(DataError::PpmMaxval {
            path: path.to_path_buf(),
            got: maxval,
        });
    }
    if width == 0 || height == 0 {
        return Err(header_err(path, "zero image dimension"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !cursor.advance_single_whitespace() {
        return Err(header_err(path, "missing whitespace before pixel data"));
    }
    let expected = width * height * 3;
    let rest = &cursor.bytes[cursor.pos..];
    if rest.len() < expected {
        return Err(DataError::PpmTruncated {
            path: path.to_path_buf(),
            expected,
            got: rest.len(),
        });
    }
    if rest.len() > expected {
        return Err(DataError::PpmTrailing {
            path: path.to_path_buf(),
            extra: rest.len() - expected,
        });
    }
    Ok(RgbImage {
        width,
        height,
        data: rest.to_vec(),
    })
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.data);
    out
}

pub fn write_ppm(image: &RgbImage, path: &Path) -> Result<(), DataError> {
    std::fs::write(path, encode_ppm(image)).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn header_err(path: &Path, detail: &str) -> DataError {
    DataError::PpmHeader {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    /// Skips whitespace and `#` comments, then returns the next token.
    fn token(&mut self) -> Option<&[u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        if self.pos >= self.bytes.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        Some(&self.bytes[start..self.pos])
    }

    fn unsigned(&mut self) -> Option<usize> {
        let token = self.token()?;
        std::str::from_utf8(token).ok()?.parse().ok()
    }

    fn advance_single_whitespace(&mut self) -> bool {
        if self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
            true
        } else {
            false
        }
    }
}
