//! Binary PGM (P5) reading and writing. The writer emits one canonical
//! header form so identical pixel data always produces identical bytes.

use std::path::Path;

use crate::error::{Error, Result};

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn save_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    std::fs::write(path, encode_pgm(width, height, pixels))?;
    Ok(())
}

pub fn decode_pgm(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let fail = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut cursor = 0usize;
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(fail("not a binary PGM (missing P5 magic)"));
    }
    cursor += 2;

    let mut fields = [0usize; 3];
    for field in &mut fields {
        *field = read_header_number(bytes, &mut cursor).ok_or_else(|| fail("truncated header"))?;
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(cursor) {
        Some(b) if b.is_ascii_whitespace() => cursor += 1,
        _ => return Err(fail("missing raster separator")),
    }

    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if width == 0 || height == 0 {
        return Err(fail("zero image dimension"));
    }
    if maxval != 255 {
        return Err(fail("only 8-bit PGM (maxval 255) is supported"));
    }
    let raster = &bytes[cursor..];
    if raster.len() != width * height {
        return Err(fail("raster length does not match dimensions"));
    }
    Ok((width, height, raster.to_vec()))
}

pub fn load_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path)?;
    decode_pgm(path, &bytes)
}

/// Next decimal token, skipping whitespace and `#` comment lines.
fn read_header_number(bytes: &[u8], cursor: &mut usize) -> Option<usize> {
    loop {
        match bytes.get(*cursor)? {
            b if b.is_ascii_whitespace() => *cursor += 1,
            b'#' => {
                while *bytes.get(*cursor)? != b'\n' {
                    *cursor += 1;
                }
            }
            b if b.is_ascii_digit() => break,
            _ => return None,
        }
    }
    let mut value = 0usize;
    let mut any = false;
    while let Some(b) = bytes.get(*cursor) {
        if !b.is_ascii_digit() {
            break;
        }
        value = value.checked_mul(10)?.checked_add((b - b'0') as usize)?;
        any = true;
        *cursor += 1;
    }
    any.then_some(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writer_emits_canonical_bytes() {
        assert_eq!(encode_pgm(2, 1, &[0, 255]), b"P5\n2 1\n255\n\x00\xff");
    }

    #[test]
    fn round_trip_preserves_raster() {
        let pixels: Vec<u8> = (0..=255).collect();
        let bytes = encode_pgm(16, 16, &pixels);
        let (w, h, back) = decode_pgm(Path::new("mem"), &bytes).unwrap();
        assert_eq!((w, h), (16, 16));
        assert_eq!(back, pixels);
    }

    #[test]
    fn header_comments_and_whitespace_are_tolerated() {
        let bytes = b"P5\n# made by hand\n 3 # width\n2\n255\n\x01\x02\x03\x04\x05\x06";
        let (w, h, data) = decode_pgm(Path::new("mem"), bytes).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(data, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn malformed_headers_are_rejected() {
        let cases: [&[u8]; 4] = [
            b"P6\n1 1\n255\n\x00",
            b"P5\n1 1\n254\n\x00",
            b"P5\n2 2\n255\n\x00\x00\x00",
            b"P5\n1 1\n255",
        ];
        for case in cases {
            assert!(matches!(
                decode_pgm(Path::new("mem"), case),
                Err(Error::Format { .. })
            ));
        }
    }
}
