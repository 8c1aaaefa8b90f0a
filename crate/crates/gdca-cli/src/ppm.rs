//! Binary PPM (P6) codec — the only image format the tool speaks.
//!
//! The writer is canonical (`P6\n<w> <h>\n255\n` + raw RGB rows, top to
//! bottom), so identical images produce identical bytes. The reader accepts
//! the full header grammar: any whitespace between tokens and `#` comments
//! through end of line. Only maxval 255 is supported.

use std::fs;
use std::path::Path;

use gdca_core::image::Image;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct PpmError(pub String);

pub fn encode(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(&img.to_rgb8());
    out
}

pub fn decode(bytes: &[u8]) -> Result<Image, PpmError> {
    let mut pos = 0usize;

    if bytes.len() < 2 || &bytes[0..2] != b"P6" {
        let found: Vec<u8> = bytes.iter().copied().take(2).collect();
        return Err(PpmError(format!(
            "not a P6 ppm: first bytes {found:?}, expected [80, 54]"
        )));
    }
    pos += 2;

    let width = read_header_int(bytes, &mut pos)?;
    let height = read_header_int(bytes, &mut pos)?;
    let maxval = read_header_int(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(PpmError(format!("unsupported maxval {maxval}, only 255")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(PpmError(format!("missing raster separator at byte {pos}"))),
    }

    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| PpmError(format!("image dimensions {width}x{height} overflow")))?;
    let have = bytes.len() - pos;
    if have < need {
        return Err(PpmError(format!(
            "truncated raster: need {need} bytes, have {have} (from byte {pos})"
        )));
    }
    if have > need {
        return Err(PpmError(format!(
            "trailing data: raster is {need} bytes but {have} remain at byte {pos}"
        )));
    }
    Image::from_rgb8(height, width, &bytes[pos..pos + need]).map_err(|e| PpmError(e.to_string()))
}

/// Next decimal integer in the header, skipping whitespace and `#` comments.
fn read_header_int(bytes: &[u8], pos: &mut usize) -> Result<usize, PpmError> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_digit() => break,
            Some(b) => {
                return Err(PpmError(format!(
                    "unexpected byte {b:#04x} in header at offset {}",
                    *pos
                )))
            }
            None => return Err(PpmError("header ended before all fields were read".into())),
        }
    }
    let mut v: usize = 0;
    while let Some(&b) = bytes.get(*pos) {
        if !b.is_ascii_digit() {
            break;
        }
        v = v
            .checked_mul(10)
            .and_then(|v| v.checked_add((b - b'0') as usize))
            .ok_or_else(|| PpmError(format!("header integer overflow at byte {}", *pos)))?;
        *pos += 1;
    }
    Ok(v)
}

pub fn read_file(path: &Path) -> Result<Image, PpmError> {
    let bytes =
        fs::read(path).map_err(|e| PpmError(format!("cannot read {}: {e}", path.display())))?;
    decode(&bytes).map_err(|e| PpmError(format!("{}: {e}", path.display())))
}

pub fn write_file(path: &Path, img: &Image) -> Result<(), PpmError> {
    fs::write(path, encode(img))
        .map_err(|e| PpmError(format!("cannot write {}: {e}", path.display())))
}
