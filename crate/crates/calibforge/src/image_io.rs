//! Depth as grayscale PFM and color as binary PPM.
//!
//! PFM files are written little-endian (negative scale) with rows bottom-up,
//! as the format prescribes. Both byte orders are accepted on read.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use calibforge_core::camera::{DepthImage, RgbImage};

use crate::error::{CliError, Result};

/// Splits `count` whitespace-separated header tokens off `bytes`, skipping
/// `#` comments, and returns them with the offset of the pixel data.
fn header_tokens(bytes: &[u8], count: usize) -> Option<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return None;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the data.
    if i >= bytes.len() || !bytes[i].is_ascii_whitespace() {
        return None;
    }
    Some((tokens, i + 1))
}

fn parse_dims(path: &Path, w: &str, h: &str) -> Result<(usize, usize)> {
    let w: usize = w.parse().map_err(|_| CliError::format(path, format!("bad width {w:?}")))?;
    let h: usize = h.parse().map_err(|_| CliError::format(path, format!("bad height {h:?}")))?;
    if w == 0 || h == 0 {
        return Err(CliError::format(path, "empty image"));
    }
    Ok((w, h))
}

pub fn encode_pfm(depth: &DepthImage) -> Vec<u8> {
    let (w, h) = (depth.width(), depth.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * w * h);
    for v in (0..h).rev() {
        for u in 0..w {
            out.extend_from_slice(&depth.get(u, v).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(path: &Path, bytes: &[u8]) -> Result<DepthImage> {
    let (tokens, offset) = header_tokens(bytes, 4).ok_or_else(|| CliError::format(path, "truncated PFM header"))?;
    match tokens[0].as_str() {
        "Pf" => {}
        "PF" => return Err(CliError::format(path, "color PFM is not a depth image")),
        other => return Err(CliError::format(path, format!("not a PFM file (magic {other:?})"))),
    }
    let (w, h) = parse_dims(path, &tokens[1], &tokens[2])?;
    let scale: f32 = tokens[3].parse().map_err(|_| CliError::format(path, format!("bad scale {:?}", tokens[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(CliError::format(path, "PFM scale must be non-zero"));
    }
    let data = &bytes[offset..];
    if data.len() != 4 * w * h {
        return Err(CliError::format(path, format!("expected {} data bytes, found {}", 4 * w * h, data.len())));
    }
    let mut values = vec![0.0f32; w * h];
    for (i, chunk) in data.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let value = if scale < 0.0 { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row, col) = (i / w, i % w);
        values[(h - 1 - row) * w + col] = value;
    }
    DepthImage::new(w, h, values).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn encode_ppm(rgb: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", rgb.width(), rgb.height()).into_bytes();
    out.extend_from_slice(rgb.data());
    out
}

pub fn decode_ppm(path: &Path, bytes: &[u8]) -> Result<RgbImage> {
    let (tokens, offset) = header_tokens(bytes, 4).ok_or_else(|| CliError::format(path, "truncated PPM header"))?;
    if tokens[0] != "P6" {
        return Err(CliError::format(path, format!("not a binary PPM file (magic {:?})", tokens[0])));
    }
    let (w, h) = parse_dims(path, &tokens[1], &tokens[2])?;
    if tokens[3] != "255" {
        return Err(CliError::format(path, format!("unsupported max value {}", tokens[3])));
    }
    let data = &bytes[offset..];
    if data.len() != 3 * w * h {
        return Err(CliError::format(path, format!("expected {} data bytes, found {}", 3 * w * h, data.len())));
    }
    RgbImage::new(w, h, data.to_vec()).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| CliError::write(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| CliError::write(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::read(path, e))
}

pub fn write_pfm(path: &Path, depth: &DepthImage) -> Result<()> {
    write_bytes(path, &encode_pfm(depth))
}

pub fn read_pfm(path: &Path) -> Result<DepthImage> {
    decode_pfm(path, &read_bytes(path)?)
}

pub fn write_ppm(path: &Path, rgb: &RgbImage) -> Result<()> {
    write_bytes(path, &encode_ppm(rgb))
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    decode_ppm(path, &read_bytes(path)?)
}
