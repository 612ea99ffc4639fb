//! PLY point clouds: `float x y z` and optional `uchar red green blue`.

use std::path::Path;

use nalgebra::Point3;

use super::{read_bytes, write_bytes};
use crate::fusion::PointCloud;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

pub fn ply_bytes(cloud: &PointCloud, format: PlyFormat) -> Vec<u8> {
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let mut header = format!(
        "ply\nformat {fmt} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
        cloud.len()
    );
    if cloud.colors.is_some() {
        header += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    }
    header += "end_header\n";
    let mut out = header.into_bytes();
    for (i, p) in cloud.points.iter().enumerate() {
        let xyz = [p.x as f32, p.y as f32, p.z as f32];
        let rgb = cloud.colors.as_ref().map(|c| c[i]);
        match format {
            PlyFormat::Ascii => {
                let mut line = format!("{} {} {}", xyz[0], xyz[1], xyz[2]);
                if let Some([r, g, b]) = rgb {
                    line += &format!(" {r} {g} {b}");
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
            PlyFormat::BinaryLittleEndian => {
                for v in xyz {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                if let Some(rgb) = rgb {
                    out.extend_from_slice(&rgb);
                }
            }
        }
    }
    out
}

pub fn write_ply(cloud: &PointCloud, path: &Path, format: PlyFormat) -> Result<()> {
    write_bytes(path, &ply_bytes(cloud, format))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().expect("4 bytes")) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().expect("4 bytes")) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().expect("4 bytes")) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

/// Reads the vertex element of an ASCII or little-endian binary PLY file.
/// The vertex element must come first; later elements are ignored.
pub fn read_ply(path: &Path) -> Result<PointCloud> {
    parse_ply(&read_bytes(path)?, path)
}

pub fn parse_ply(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    let mut pos = 0;
    let mut line_no = 0;
    let truncated = |line| Error::parse(path, line, "truncated PLY header");
    let (_, magic) = next_line(bytes, &mut pos, &mut line_no).ok_or_else(|| truncated(1))?;
    if magic != "ply" {
        return Err(Error::parse(path, 1, "missing \"ply\" magic"));
    }
    let mut format = None;
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    loop {
        let (n, line) = next_line(bytes, &mut pos, &mut line_no).ok_or_else(|| truncated(line_no_hint(bytes)))?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["format", f, "1.0"] => {
                format = Some(match *f {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(Error::parse(path, n, format!("unsupported PLY format {other:?}"))),
                });
            }
            ["element", name, count] => {
                let count: usize = count.parse().map_err(|_| Error::parse(path, n, "bad element count"))?;
                if *name == "vertex" {
                    if vertex_count.is_some() {
                        return Err(Error::parse(path, n, "duplicate vertex element"));
                    }
                    vertex_count = Some(count);
                    in_vertex = true;
                } else if vertex_count.is_none() {
                    return Err(Error::parse(path, n, "vertex element must come first"));
                } else {
                    in_vertex = false;
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::parse(path, n, "list properties on vertices are not supported"));
            }
            ["property", ty, name] if in_vertex => {
                let ty = Scalar::parse(ty).ok_or_else(|| Error::parse(path, n, format!("unknown type {ty:?}")))?;
                props.push((name.to_string(), ty));
            }
            ["property", ..] => {}
            _ => return Err(Error::parse(path, n, format!("unexpected header line {line:?}"))),
        }
    }
    let format = format.ok_or_else(|| Error::parse(path, 1, "missing format line"))?;
    let count = vertex_count.ok_or_else(|| Error::parse(path, 1, "missing vertex element"))?;
    let find = |name: &str| props.iter().position(|(p, _)| p == name);
    let (Some(ix), Some(iy), Some(iz)) = (find("x"), find("y"), find("z")) else {
        return Err(Error::parse(path, 1, "vertices need x, y and z"));
    };
    let rgb = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    let header_lines = line_no;
    let body = &bytes[pos..];
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(count);
    match format {
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| Error::parse(path, header_lines + 1, "ASCII body is not UTF-8"))?;
            let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
            for _ in 0..count {
                let (k, l) = lines.next().ok_or_else(|| Error::parse(path, header_lines + 1, "fewer vertices than declared"))?;
                let vals: Vec<f64> = l
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse(path, header_lines + 1 + k, "bad vertex value"))?;
                if vals.len() != props.len() {
                    return Err(Error::parse(path, header_lines + 1 + k, "wrong number of vertex values"));
                }
                rows.push(vals);
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let stride: usize = props.iter().map(|(_, t)| t.size()).sum();
            if body.len() < stride * count {
                return Err(Error::parse(path, header_lines + 1, "binary body shorter than declared"));
            }
            for v in 0..count {
                let mut off = v * stride;
                let mut vals = Vec::with_capacity(props.len());
                for (_, t) in &props {
                    vals.push(t.read_le(&body[off..]));
                    off += t.size();
                }
                rows.push(vals);
            }
        }
    }
    let points = rows.iter().map(|r| Point3::new(r[ix], r[iy], r[iz])).collect();
    let colors = rgb.map(|[r, g, b]| {
        rows.iter()
            .map(|row| [row[r].clamp(0.0, 255.0) as u8, row[g].clamp(0.0, 255.0) as u8, row[b].clamp(0.0, 255.0) as u8])
            .collect()
    });
    PointCloud::new(points, colors).map_err(|e| Error::parse(path, header_lines + 1, e.to_string()))
}

fn next_line(bytes: &[u8], pos: &mut usize, line_no: &mut usize) -> Option<(usize, String)> {
    let end = bytes[*pos..].iter().position(|&b| b == b'\n')? + *pos;
    let s = String::from_utf8_lossy(&bytes[*pos..end]).trim().to_string();
    *pos = end + 1;
    *line_no += 1;
    Some((*line_no, s))
}

fn line_no_hint(bytes: &[u8]) -> usize {
    bytes.iter().filter(|&&b| b == b'\n').count() + 1
}
