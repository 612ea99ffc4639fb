//! Camera text files.
//!
//! ```text
//! extrinsic
//! r11 r12 r13 t1
//! r21 r22 r23 t2
//! r31 r32 r33 t3
//! 0 0 0 1
//!
//! intrinsic
//! f_x s c_x
//! 0 f_y c_y
//! 0 0 1
//!
//! d_min d_interval [count d_max]
//! ```
//!
//! The extrinsic maps world to camera coordinates. Numbers are written in
//! shortest round-trip form, so writing and reading back is exact.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::{read_bytes, write_bytes};
use crate::geometry::{rotation_defect, Camera};
use crate::{Error, Result};

/// Rotations further than this from orthonormal are repaired with a warning.
pub const ROTATION_WARN_DEFECT: f64 = 1e-3;
/// Rotations closer than this are taken as they are.
const ROTATION_EXACT_DEFECT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CamFile {
    pub camera: Camera,
    pub depth_min: f64,
    pub depth_interval: f64,
    /// Hypothesis count and far depth, when the file carries them.
    pub depth_count: Option<(usize, f64)>,
}

impl CamFile {
    /// Far end of the depth range, using `default_count` hypotheses when the
    /// file only gives an interval.
    pub fn depth_max(&self, default_count: usize) -> f64 {
        match self.depth_count {
            Some((_, max)) => max,
            None => self.depth_min + self.depth_interval * (default_count.max(2) - 1) as f64,
        }
    }
}

pub fn read_cam(path: &Path) -> Result<CamFile> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::parse(path, 1, "camera file is not UTF-8"))?;
    parse_cam(&text, path)
}

pub fn write_cam(path: &Path, cam: &CamFile) -> Result<()> {
    write_bytes(path, format_cam(cam).as_bytes())
}

pub fn format_cam(cam: &CamFile) -> String {
    let r = cam.camera.rotation();
    let t = cam.camera.translation();
    let k = cam.camera.intrinsic();
    let mut s = String::from("extrinsic\n");
    for i in 0..3 {
        s += &format!("{} {} {} {}\n", r[(i, 0)], r[(i, 1)], r[(i, 2)], t[i]);
    }
    s += "0 0 0 1\n\nintrinsic\n";
    for i in 0..3 {
        s += &format!("{} {} {}\n", k[(i, 0)], k[(i, 1)], k[(i, 2)]);
    }
    s += &format!("\n{} {}", cam.depth_min, cam.depth_interval);
    if let Some((n, max)) = cam.depth_count {
        s += &format!(" {n} {max}");
    }
    s.push('\n');
    s
}

/// Nearest rotation in the Frobenius sense, `U Vᵀ` from the SVD.
fn nearest_rotation(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let r = svd.u? * svd.v_t?;
    (r.determinant() > 0.0 && svd.singular_values.min() > 1e-6).then_some(r)
}

pub fn parse_cam(text: &str, path: &Path) -> Result<CamFile> {
    // Non-blank lines with their 1-based line numbers.
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let last_line = text.lines().count().max(1);
    let mut next = |what: &str| lines.next().ok_or_else(|| Error::parse(path, last_line, format!("missing {what}")));
    let numbers = |(line, s): (usize, &str), n: usize, what: &str| -> Result<Vec<f64>> {
        let v: Vec<f64> = s
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::parse(path, line, format!("bad number {t:?} in {what}"))))
            .collect::<Result<_>>()?;
        if v.len() != n {
            return Err(Error::parse(path, line, format!("{what} needs {n} numbers, found {}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse(path, line, format!("non-finite value in {what}")));
        }
        Ok(v)
    };

    let (line, head) = next("extrinsic header")?;
    if head != "extrinsic" {
        return Err(Error::parse(path, line, format!("expected \"extrinsic\", found {head:?}")));
    }
    let mut r = Matrix3::zeros();
    let mut t = Vector3::zeros();
    for i in 0..3 {
        let row = numbers(next("extrinsic row")?, 4, "extrinsic row")?;
        for j in 0..3 {
            r[(i, j)] = row[j];
        }
        t[i] = row[3];
    }
    let last = next("extrinsic row")?;
    let bottom = numbers(last, 4, "extrinsic row")?;
    if bottom != [0.0, 0.0, 0.0, 1.0] {
        return Err(Error::parse(path, last.0, "last extrinsic row must be 0 0 0 1"));
    }
    let (line, head) = next("intrinsic header")?;
    if head != "intrinsic" {
        return Err(Error::parse(path, line, format!("expected \"intrinsic\", found {head:?}")));
    }
    let mut k = Matrix3::zeros();
    for i in 0..3 {
        let row = numbers(next("intrinsic row")?, 3, "intrinsic row")?;
        for j in 0..3 {
            k[(i, j)] = row[j];
        }
    }
    let depth_line = next("depth range")?;
    let count = depth_line.1.split_whitespace().count();
    let depth = match count {
        2 | 4 => numbers(depth_line, count, "depth range")?,
        n => return Err(Error::parse(path, depth_line.0, format!("depth range needs 2 or 4 numbers, found {n}"))),
    };
    if let Some((line, extra)) = lines.next() {
        return Err(Error::parse(path, line, format!("unexpected trailing content {extra:?}")));
    }

    if !(r.determinant() > 0.0) {
        return Err(Error::NonRigidRotation(format!("{}: rotation is singular or a reflection", path.display())));
    }
    let defect = rotation_defect(&r);
    if defect >= ROTATION_EXACT_DEFECT {
        let fixed = nearest_rotation(&r).ok_or_else(|| {
            Error::NonRigidRotation(format!("{}: rotation is singular or a reflection", path.display()))
        })?;
        if defect > ROTATION_WARN_DEFECT {
            log::warn!(
                "{}: rotation is {defect:.3e} from orthonormal; replaced by the nearest rotation",
                path.display()
            );
        }
        r = fixed;
    }
    let camera = Camera::new(k, r, t).map_err(|e| Error::parse(path, 1, e.to_string()))?;
    let depth_count = if count == 4 {
        let n = depth[2];
        if n < 2.0 || n.fract() != 0.0 {
            return Err(Error::parse(path, depth_line.0, format!("hypothesis count {n} is not an integer ≥ 2")));
        }
        Some((n as usize, depth[3]))
    } else {
        None
    };
    Ok(CamFile {
        camera,
        depth_min: depth[0],
        depth_interval: depth[1],
        depth_count,
    })
}
