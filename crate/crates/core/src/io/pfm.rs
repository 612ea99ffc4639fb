//! Single-channel PFM float maps.
//!
//! Header `Pf`, then `width height`, then a scale whose negative sign marks
//! little-endian data, each on its own line. Rows follow bottom to top as
//! 32-bit floats. Invalid depths are stored as NaN.

use std::path::Path;

use super::{read_bytes, split_header_lines, write_bytes};
use crate::maps::{ConfidenceMap, DepthMap};
use crate::{Error, Result};

/// Row-major (top row first) `f32` map.
#[derive(Debug, Clone)]
pub struct FloatMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FloatMap {
    /// Bitwise equality, so NaN payloads compare too.
    pub fn bit_eq(&self, other: &FloatMap) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

pub fn pfm_bytes(map: &FloatMap) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", map.width, map.height).into_bytes();
    out.reserve(map.data.len() * 4);
    for row in map.data.chunks(map.width.max(1)).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn parse_pfm(bytes: &[u8], path: &Path) -> Result<FloatMap> {
    let (lines, data) = split_header_lines(bytes, 3).ok_or_else(|| Error::parse(path, 1, "truncated PFM header"))?;
    match lines[0].trim() {
        "Pf" => {}
        "PF" => return Err(Error::parse(path, 1, "three-channel PFM where a single channel was expected")),
        other => return Err(Error::parse(path, 1, format!("expected \"Pf\", found {other:?}"))),
    }
    let dims: Vec<usize> = lines[1]
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| Error::parse(path, 2, format!("bad dimension {t:?}"))))
        .collect::<Result<_>>()?;
    let [width, height] = dims[..] else {
        return Err(Error::parse(path, 2, "expected \"width height\""));
    };
    let scale: f64 = lines[2]
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, 3, format!("bad scale {:?}", lines[2])))?;
    if scale > 0.0 {
        return Err(Error::BigEndianUnsupported);
    }
    if !(scale < 0.0) {
        return Err(Error::parse(path, 3, "scale must be non-zero"));
    }
    let n = width * height;
    if data.len() != n * 4 {
        return Err(Error::parse(
            path,
            4,
            format!("expected {} bytes of float data, found {}", n * 4, data.len()),
        ));
    }
    let mut out = vec![0.0f32; n];
    for (k, chunk) in data.chunks_exact(4).enumerate() {
        let (row_from_bottom, x) = (k / width, k % width);
        out[(height - 1 - row_from_bottom) * width + x] = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
    }
    Ok(FloatMap { width, height, data: out })
}

pub fn read_pfm(path: &Path) -> Result<FloatMap> {
    parse_pfm(&read_bytes(path)?, path)
}

pub fn write_pfm(path: &Path, map: &FloatMap) -> Result<()> {
    write_bytes(path, &pfm_bytes(map))
}

pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    let data = depth.to_nan_encoded().into_iter().map(|v| v as f32).collect();
    write_pfm(
        path,
        &FloatMap {
            width: depth.width(),
            height: depth.height(),
            data,
        },
    )
}

/// NaN, infinite and non-positive values are read as invalid.
pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let m = read_pfm(path)?;
    let values: Vec<f64> = m
        .data
        .iter()
        .map(|&v| if v.is_finite() && v > 0.0 { v as f64 } else { f64::NAN })
        .collect();
    DepthMap::from_nan_encoded(m.width, m.height, &values)
}

pub fn write_confidence(path: &Path, conf: &ConfidenceMap) -> Result<()> {
    write_pfm(
        path,
        &FloatMap {
            width: conf.width(),
            height: conf.height(),
            data: conf.values().iter().map(|&v| v as f32).collect(),
        },
    )
}

pub fn read_confidence(path: &Path) -> Result<ConfidenceMap> {
    let m = read_pfm(path)?;
    let values = m.data.iter().map(|&v| (v as f64).clamp(0.0, 1.0)).collect();
    ConfidenceMap::new(m.width, m.height, values)
}
