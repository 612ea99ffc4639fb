//! Binary PGM (`P5`) and PPM (`P6`) images with 8-bit samples.

use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::maps::ImageBuffer;
use crate::{Error, Result};

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// `P5` for one channel, `P6` for three; samples in `[0, 1]` are scaled to
/// `0..=255` and rounded.
pub fn pnm_bytes(img: &ImageBuffer) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| to_byte(v)));
    out
}

pub fn write_pnm(path: &Path, img: &ImageBuffer) -> Result<()> {
    write_bytes(path, &pnm_bytes(img))
}

pub fn read_pnm(path: &Path) -> Result<ImageBuffer> {
    parse_pnm(&read_bytes(path)?, path)
}

/// Header tokens are separated by whitespace and may be interleaved with
/// `#` comments; exactly one whitespace byte separates the header from the
/// samples.
pub fn parse_pnm(bytes: &[u8], path: &Path) -> Result<ImageBuffer> {
    let mut pos = 0;
    let mut line = 1;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                if bytes[pos] == b'\n' {
                    line += 1;
                }
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(path, line, "truncated image header"));
        }
        tokens.push((line, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
    }
    // The single whitespace byte after maxval.
    if pos >= bytes.len() {
        return Err(Error::parse(path, line, "missing image data"));
    }
    pos += 1;
    let channels = match tokens[0].1.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::parse(path, tokens[0].0, format!("unsupported image type {other:?}"))),
    };
    let num = |k: usize| -> Result<usize> {
        tokens[k]
            .1
            .parse()
            .map_err(|_| Error::parse(path, tokens[k].0, format!("bad header value {:?}", tokens[k].1)))
    };
    let (width, height, maxval) = (num(1)?, num(2)?, num(3)?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::parse(path, tokens[3].0, format!("only 8-bit images are supported, maxval {maxval}")));
    }
    let n = width * height * channels;
    let data = &bytes[pos..];
    if data.len() != n {
        return Err(Error::parse(path, line, format!("expected {n} sample bytes, found {}", data.len())));
    }
    let max = maxval as f64;
    ImageBuffer::new(width, height, channels, data.iter().map(|&b| (b as f64 / max).min(1.0)).collect())
}
