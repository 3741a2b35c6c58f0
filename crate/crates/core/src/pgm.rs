//! Binary PGM (P5) encoding and decoding.
//!
//! All on-disk 2D images use P5 with maxval 255: the header is
//! `P5\n<width> <height>\n255\n` followed by raw row-major bytes, which keeps
//! every downstream comparison bit-exact.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::image::GrayImage;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("not a binary PGM: missing P5 magic")]
    BadMagic,
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error("unsupported maxval {0} (expected 1..=255)")]
    BadMaxval(u32),
    #[error("pixel data truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Encodes an image as P5 bytes.
pub fn encode(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.pixels);
    out
}

pub fn write_file(img: &GrayImage, path: &Path) -> Result<(), PgmError> {
    fs::write(path, encode(img))?;
    Ok(())
}

/// Decodes P5 bytes. Comments (`#` to end of line) are accepted in the
/// header; maxval may be any value in 1..=255 and pixels are read verbatim.
pub fn decode(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(PgmError::BadMagic);
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        *field = read_header_int(bytes, &mut pos)?;
    }
    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if width == 0 || height == 0 {
        return Err(PgmError::BadHeader("zero dimension".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(PgmError::BadMaxval(maxval));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(PgmError::BadHeader("missing raster separator".into()));
    }
    pos += 1;
    let expected = width as usize * height as usize;
    let found = bytes.len() - pos;
    if found < expected {
        return Err(PgmError::Truncated { expected, found });
    }
    Ok(GrayImage::new(
        width as usize,
        height as usize,
        bytes[pos..pos + expected].to_vec(),
    ))
}

pub fn read_file(path: &Path) -> Result<GrayImage, PgmError> {
    decode(&fs::read(path)?)
}

fn read_header_int(bytes: &[u8], pos: &mut usize) -> Result<u32, PgmError> {
    // Skip whitespace and comments.
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if *pos == start {
        return Err(PgmError::BadHeader("expected integer".into()));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| PgmError::BadHeader("integer out of range".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_bit_exact() {
        let img = GrayImage::new(3, 2, vec![0, 10, 20, 30, 40, 255]);
        let bytes = encode(&img);
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&bytes[b"P5\n3 2\n255\n".len()..], &img.pixels[..]);
    }

    #[test]
    fn round_trip() {
        let img = GrayImage::new(4, 3, (0..12).map(|i| (i * 20) as u8).collect());
        assert_eq!(decode(&encode(&img)).unwrap(), img);
    }

    #[test]
    fn decode_accepts_comments() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 9]);
        let img = decode(&bytes).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.pixels, vec![7, 9]);
    }

    #[test]
    fn decode_rejects_truncation_and_bad_magic() {
        let img = GrayImage::new(4, 4, vec![1; 16]);
        let mut bytes = encode(&img);
        bytes.truncate(bytes.len() - 1);
        assert!(matches!(decode(&bytes), Err(PgmError::Truncated { .. })));
        assert!(matches!(decode(b"P6\n1 1\n255\nx"), Err(PgmError::BadMagic)));
    }
}
