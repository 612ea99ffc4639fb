//! Pinhole cameras, the back-project / project / reproject chain and depth
//! hypothesis sampling.
//!
//! Cameras follow the `P = K [R | t]` convention with `R, t` mapping world
//! points into the camera frame. Pixel `(i, j)` has its center at exactly
//! `(i, j)`. The depth attached to a pixel is the camera-frame z coordinate,
//! so `back_project(p, d)` and the third homogeneous coordinate of
//! `project(X)` speak about the same quantity.

use nalgebra::{Matrix3, Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maps::DepthMap;
use crate::{Error, Result};

const ROTATION_TOLERANCE: f64 = 1e-9;
const SINGULAR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ProjectionError {
    #[error("point lies behind the camera")]
    BehindCamera,
}

/// Why a reference → source → reference round trip produced no result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ReprojectError {
    #[error("projection falls outside the source image")]
    OutOfBounds,
    #[error("source depth is masked at the projected pixel")]
    Masked,
    #[error("point lies behind one of the cameras")]
    BehindCamera,
}

impl From<ProjectionError> for ReprojectError {
    fn from(_: ProjectionError) -> Self {
        ReprojectError::BehindCamera
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    intrinsic: Matrix3<f64>,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    m: Matrix3<f64>,
    m_inv: Matrix3<f64>,
    kt: Vector3<f64>,
}

/// Deviation of `R` from orthonormality, `‖RᵀR − I‖∞`.
pub fn rotation_defect(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

impl Camera {
    pub fn new(
        intrinsic: Matrix3<f64>,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        if intrinsic.iter().chain(rotation.iter()).chain(translation.iter()).any(|v| !v.is_finite())
        {
            return Err(Error::InvalidCamera("non-finite parameter".into()));
        }
        if (0..3).any(|i| intrinsic[(i, i)] <= 0.0) {
            return Err(Error::InvalidCamera(
                "intrinsic diagonal must be positive".into(),
            ));
        }
        if intrinsic[(1, 0)] != 0.0 || intrinsic[(2, 0)] != 0.0 || intrinsic[(2, 1)] != 0.0 {
            return Err(Error::InvalidCamera(
                "intrinsic must be upper triangular".into(),
            ));
        }
        let defect = rotation_defect(&rotation);
        if defect >= ROTATION_TOLERANCE || rotation.determinant() <= 0.0 {
            return Err(Error::InvalidCamera(format!(
                "rotation is not a proper rotation (defect {defect:.3e}, det {:.6})",
                rotation.determinant()
            )));
        }
        let m = intrinsic * rotation;
        if m.determinant().abs() <= SINGULAR_TOLERANCE {
            return Err(Error::InvalidCamera("projection matrix is singular".into()));
        }
        let m_inv = m
            .try_inverse()
            .ok_or_else(|| Error::InvalidCamera("projection matrix is singular".into()))?;
        Ok(Self {
            intrinsic,
            rotation,
            translation,
            m,
            m_inv,
            kt: intrinsic * translation,
        })
    }

    /// Camera with `K = [[f, 0, cx], [0, f, cy], [0, 0, 1]]`.
    pub fn simple(
        focal: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        let k = Matrix3::new(focal, 0.0, cx, 0.0, focal, cy, 0.0, 0.0, 1.0);
        Self::new(k, rotation, translation)
    }

    pub fn intrinsic(&self) -> &Matrix3<f64> {
        &self.intrinsic
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `M = K R`.
    pub fn m(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// `K t`, the last column of `P`.
    pub fn kt(&self) -> &Vector3<f64> {
        &self.kt
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation.transpose() * self.translation))
    }

    /// World-space direction of the ray through `p`, scaled so that moving
    /// one unit along it advances the camera-frame depth by one.
    pub fn ray_direction(&self, p: &Point2<f64>) -> Vector3<f64> {
        self.m_inv * Vector3::new(p.x, p.y, 1.0)
    }

    /// Camera-frame depth of a world point.
    pub fn depth_of(&self, x: &Point3<f64>) -> f64 {
        (self.rotation * x.coords + self.translation).z
    }
}

/// Pixel and depth of a projected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Point2<f64>,
    pub depth: f64,
}

/// `X = M⁻¹ (d·p̃ − K t)`.
pub fn back_project(cam: &Camera, p: &Point2<f64>, depth: f64) -> Point3<f64> {
    let ph = Vector3::new(p.x, p.y, 1.0) * depth;
    Point3::from(cam.m_inv * (ph - cam.kt))
}

/// `w = P X̃`, pixel `(w₁/w₃, w₂/w₃)` at depth `w₃`.
pub fn project(cam: &Camera, x: &Point3<f64>) -> std::result::Result<Projection, ProjectionError> {
    let w = cam.m * x.coords + cam.kt;
    if !(w.z > 0.0) {
        return Err(ProjectionError::BehindCamera);
    }
    Ok(Projection {
        pixel: Point2::new(w.x / w.z, w.y / w.z),
        depth: w.z,
    })
}

/// Something that can report a view's depth at a continuous pixel location.
pub trait DepthSource {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    /// Depth seen at `q`; `None` when the pixel carries no valid depth.
    /// Only called for `q` inside [`DepthSource::contains`].
    fn depth_at(&self, q: &Point2<f64>) -> Option<f64>;

    fn contains(&self, q: &Point2<f64>) -> bool {
        nearest_pixel(q, self.width(), self.height()).is_some()
    }
}

/// Integer pixel whose cell contains `q`, if inside a `width × height` grid.
#[inline]
pub fn nearest_pixel(q: &Point2<f64>, width: usize, height: usize) -> Option<(usize, usize)> {
    let x = (q.x + 0.5).floor();
    let y = (q.y + 0.5).floor();
    if x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64 {
        Some((x as usize, y as usize))
    } else {
        None
    }
}

/// Nearest-pixel lookup; interpolating across a depth edge would invent
/// depths that no surface has.
impl DepthSource for DepthMap {
    fn width(&self) -> usize {
        DepthMap::width(self)
    }

    fn height(&self) -> usize {
        DepthMap::height(self)
    }

    fn depth_at(&self, q: &Point2<f64>) -> Option<f64> {
        let (x, y) = nearest_pixel(q, DepthMap::width(self), DepthMap::height(self))?;
        self.get(x, y)
    }
}

/// Result of the reference → source → reference chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reprojection {
    /// `p′`, the pixel in the reference view.
    pub pixel: Point2<f64>,
    /// `d′`, its depth in the reference view.
    pub depth: f64,
    /// `q`, where the reference point landed in the source view.
    pub source_pixel: Point2<f64>,
    /// `D_j(q)`, the source depth used for the return trip.
    pub source_depth: f64,
}

pub fn reproject<S: DepthSource + ?Sized>(
    reference: &Camera,
    source: &Camera,
    p: &Point2<f64>,
    ref_depth: f64,
    source_depth: &S,
) -> std::result::Result<Reprojection, ReprojectError> {
    let x = back_project(reference, p, ref_depth);
    let q = project(source, &x)?.pixel;
    if !source_depth.contains(&q) {
        return Err(ReprojectError::OutOfBounds);
    }
    let dq = source_depth.depth_at(&q).ok_or(ReprojectError::Masked)?;
    if !(dq > 0.0) {
        return Err(ReprojectError::BehindCamera);
    }
    let x_back = back_project(source, &q, dq);
    let back = project(reference, &x_back)?;
    Ok(Reprojection {
        pixel: back.pixel,
        depth: back.depth,
        source_pixel: q,
        source_depth: dq,
    })
}

/// Pixel error `‖p − p′‖₂` and relative depth error `|d − d′| / d`.
pub fn reprojection_errors(p: &Point2<f64>, p2: &Point2<f64>, depth: f64, depth2: f64) -> (f64, f64) {
    ((p - p2).norm(), (depth - depth2).abs() / depth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthSampling {
    Uniform,
    /// Uniform in `1/d`, denser near the camera.
    Inverse,
}

impl std::str::FromStr for DepthSampling {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(DepthSampling::Uniform),
            "inverse" => Ok(DepthSampling::Inverse),
            other => Err(format!("unknown depth sampling mode `{other}`")),
        }
    }
}

/// A family of `count` fronto-parallel depth planes between `d_min` and `d_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSpace {
    d_min: f64,
    d_max: f64,
    count: usize,
    mode: DepthSampling,
}

impl HypothesisSpace {
    pub fn new(d_min: f64, d_max: f64, count: usize, mode: DepthSampling) -> Result<Self> {
        if !(d_min > 0.0 && d_min < d_max && d_max.is_finite()) {
            return Err(Error::InvalidHypotheses(format!(
                "need 0 < d_min < d_max, got {d_min}..{d_max}"
            )));
        }
        if count < 2 {
            return Err(Error::InvalidHypotheses(format!(
                "need at least 2 hypotheses, got {count}"
            )));
        }
        Ok(Self {
            d_min,
            d_max,
            count,
            mode,
        })
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mode(&self) -> DepthSampling {
        self.mode
    }

    /// Depth of hypothesis `k`. Endpoints are returned exactly.
    pub fn depth(&self, k: usize) -> f64 {
        assert!(k < self.count, "hypothesis {k} out of range");
        if k == 0 {
            return self.d_min;
        }
        if k == self.count - 1 {
            return self.d_max;
        }
        let t = k as f64 / (self.count - 1) as f64;
        match self.mode {
            DepthSampling::Uniform => self.d_min + t * (self.d_max - self.d_min),
            DepthSampling::Inverse => {
                let (a, b) = (1.0 / self.d_min, 1.0 / self.d_max);
                1.0 / (a + t * (b - a))
            }
        }
    }

    /// Maps a depth to its coordinate in the sampling space, where the
    /// hypotheses sit at `0, 1, …, count − 1`.
    pub fn continuous_index(&self, depth: f64) -> f64 {
        let steps = (self.count - 1) as f64;
        match self.mode {
            DepthSampling::Uniform => (depth - self.d_min) / (self.d_max - self.d_min) * steps,
            DepthSampling::Inverse => {
                let (a, b) = (1.0 / self.d_min, 1.0 / self.d_max);
                (1.0 / depth - a) / (b - a) * steps
            }
        }
    }

    /// Depth step between neighboring uniform hypotheses.
    pub fn uniform_spacing(&self) -> f64 {
        (self.d_max - self.d_min) / (self.count - 1) as f64
    }
}

pub fn sample_hypotheses(h: &HypothesisSpace) -> Vec<f64> {
    (0..h.count).map(|k| h.depth(k)).collect()
}

/// Source-view sampling coordinates for every reference pixel at one depth.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpGrid {
    width: usize,
    height: usize,
    coords: Vec<Point2<f64>>,
    valid: Vec<bool>,
}

impl WarpGrid {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Source coordinate for reference pixel `(x, y)`, `None` if flagged.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<Point2<f64>> {
        let i = y * self.width + x;
        self.valid[i].then_some(self.coords[i])
    }

    /// Raw coordinate even when flagged; NaN when behind the source camera.
    pub fn coord(&self, x: usize, y: usize) -> Point2<f64> {
        self.coords[y * self.width + x]
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }
}

/// Plane-sweep warp of the fronto-parallel reference plane at `depth`.
///
/// For reference pixel `p` the source point is `P_src · back_project(p, d)`,
/// which expands to the homography `A p̃ + b / d` with `A = M_src M_ref⁻¹`
/// and `b = K_src t_src − A K_ref t_ref`. Dividing `b` by the depth instead of
/// multiplying `A p̃` by it keeps the identity warp exact.
pub fn warp_grid(
    reference: &Camera,
    source: &Camera,
    depth: f64,
    width: usize,
    height: usize,
) -> WarpGrid {
    let a = source.m * reference.m_inv;
    let b = (source.kt - a * reference.kt) / depth;
    let mut coords = Vec::with_capacity(width * height);
    let mut valid = Vec::with_capacity(width * height);
    let (max_x, max_y) = ((width as f64) - 1.0, (height as f64) - 1.0);
    for y in 0..height {
        for x in 0..width {
            let w = a * Vector3::new(x as f64, y as f64, 1.0) + b;
            if w.z > 0.0 {
                let q = Point2::new(w.x / w.z, w.y / w.z);
                valid.push(q.x >= 0.0 && q.y >= 0.0 && q.x <= max_x && q.y <= max_y);
                coords.push(q);
            } else {
                valid.push(false);
                coords.push(Point2::new(f64::NAN, f64::NAN));
            }
        }
    }
    WarpGrid {
        width,
        height,
        coords,
        valid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn test_camera() -> Camera {
        Camera::simple(100.0, 32.0, 24.0, Matrix3::identity(), Vector3::zeros()).unwrap()
    }

    fn rot(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
        *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix()
    }

    #[test]
    fn principal_point_back_projects_onto_axis() {
        let x = back_project(&test_camera(), &Point2::new(32.0, 24.0), 2.0);
        assert_eq!(x, Point3::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn offset_pixel_back_projects_by_hand_value() {
        // M = K, t = 0: X = K⁻¹ (2·(132, 24, 1)) = (2·100/100, 0, 2).
        let x = back_project(&test_camera(), &Point2::new(132.0, 24.0), 2.0);
        assert_relative_eq!(x, Point3::new(2.0, 0.0, 2.0), epsilon = 1e-12);
    }

    #[test]
    fn project_matches_hand_values() {
        let cam = test_camera();
        let p = project(&cam, &Point3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(p.pixel, Point2::new(32.0, 24.0));
        assert_eq!(p.depth, 2.0);
        let p = project(&cam, &Point3::new(2.0, 0.0, 2.0)).unwrap();
        assert_relative_eq!(p.pixel, Point2::new(132.0, 24.0), epsilon = 1e-12);
        assert_eq!(p.depth, 2.0);
        assert_eq!(
            project(&cam, &Point3::new(0.0, 0.0, -1.0)),
            Err(ProjectionError::BehindCamera)
        );
    }

    #[test]
    fn camera_validation() {
        let k = Matrix3::new(100.0, 0.0, 32.0, 0.0, 100.0, 24.0, 0.0, 0.0, 1.0);
        let mut bad_k = k;
        bad_k[(1, 0)] = 1.0;
        assert!(Camera::new(bad_k, Matrix3::identity(), Vector3::zeros()).is_err());
        let mut neg = k;
        neg[(0, 0)] = -1.0;
        assert!(Camera::new(neg, Matrix3::identity(), Vector3::zeros()).is_err());
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Camera::new(k, reflection, Vector3::zeros()).is_err());
        let sheared = Matrix3::new(1.0, 1e-6, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Camera::new(k, sheared, Vector3::zeros()).is_err());
    }

    #[test]
    fn center_inverts_extrinsics() {
        let r = rot(Vector3::new(0.3, 1.0, -0.2), 0.4);
        let c = Vector3::new(1.0, -2.0, 3.0);
        let cam = Camera::simple(50.0, 10.0, 8.0, r, -(r * c)).unwrap();
        assert_relative_eq!(cam.center().coords, c, epsilon = 1e-12);
    }

    #[test]
    fn reprojection_error_values() {
        let (xp, xd) = reprojection_errors(&Point2::new(0.0, 0.0), &Point2::new(3.0, 4.0), 100.0, 101.0);
        assert_eq!(xp, 5.0);
        assert_relative_eq!(xd, 0.01, epsilon = 1e-15);
        assert_eq!(
            reprojection_errors(&Point2::new(1.0, 2.0), &Point2::new(1.0, 2.0), 3.0, 3.0),
            (0.0, 0.0)
        );
        let (_, a) = reprojection_errors(&Point2::origin(), &Point2::origin(), 7.0, 7.7);
        let (_, b) = reprojection_errors(&Point2::origin(), &Point2::origin(), 70.0, 77.0);
        assert_relative_eq!(a, b, epsilon = 1e-15);
    }

    #[test]
    fn uniform_training_range() {
        let h = HypothesisSpace::new(425.0, 745.0, 128, DepthSampling::Uniform).unwrap();
        let d = sample_hypotheses(&h);
        assert_eq!(d.len(), 128);
        assert_eq!(d[0], 425.0);
        assert_eq!(d[127], 745.0);
        assert_relative_eq!(d[1] - d[0], 2.5197, epsilon = 1e-4);
        assert_relative_eq!(h.uniform_spacing(), 320.0 / 127.0);
    }

    #[test]
    fn inverse_sampling_by_hand() {
        let h = HypothesisSpace::new(1.0, 2.0, 3, DepthSampling::Inverse).unwrap();
        let d = sample_hypotheses(&h);
        assert_eq!(d[0], 1.0);
        assert_relative_eq!(d[1], 4.0 / 3.0, epsilon = 1e-15);
        assert_eq!(d[2], 2.0);
    }

    #[test]
    fn two_hypotheses_are_the_endpoints() {
        for mode in [DepthSampling::Uniform, DepthSampling::Inverse] {
            let h = HypothesisSpace::new(3.0, 7.5, 2, mode).unwrap();
            assert_eq!(sample_hypotheses(&h), vec![3.0, 7.5]);
        }
    }

    #[test]
    fn hypothesis_space_validation() {
        assert!(HypothesisSpace::new(0.0, 1.0, 4, DepthSampling::Uniform).is_err());
        assert!(HypothesisSpace::new(2.0, 1.0, 4, DepthSampling::Uniform).is_err());
        assert!(HypothesisSpace::new(1.0, 2.0, 1, DepthSampling::Inverse).is_err());
    }

    #[test]
    fn identity_warp() {
        let cam = test_camera();
        let g = warp_grid(&cam, &cam, 3.7, 64, 48);
        for y in 0..48 {
            for x in 0..64 {
                assert_eq!(g.get(x, y), Some(Point2::new(x as f64, y as f64)));
            }
        }
    }

    #[test]
    fn translation_warp_is_a_uniform_disparity() {
        let (f, b, d) = (100.0, 0.5, 10.0);
        let reference = test_camera();
        // Source center at (b, 0, 0): t = −R C.
        let source = Camera::simple(f, 32.0, 24.0, Matrix3::identity(), Vector3::new(-b, 0.0, 0.0)).unwrap();
        let g = warp_grid(&reference, &source, d, 64, 48);
        for y in 0..48 {
            for x in 0..64 {
                let q = g.coord(x, y);
                assert_relative_eq!(x as f64 - q.x, f * b / d, epsilon = 1e-9);
                assert_relative_eq!(q.y, y as f64, epsilon = 1e-9);
            }
        }
        assert!(g.get(0, 0).is_none(), "shifted left out of bounds");
        assert!(g.get(63, 0).is_some());
    }

    #[test]
    fn warp_is_smooth_on_a_desk_rig() {
        let reference = test_camera();
        let r = rot(Vector3::new(0.0, 1.0, 0.0), 0.1);
        let c = Vector3::new(0.8, 0.1, 0.0);
        let source = Camera::simple(100.0, 32.0, 24.0, r, -(r * c)).unwrap();
        let g = warp_grid(&reference, &source, 10.0, 64, 48);
        for y in 0..48 {
            for x in 1..64 {
                assert!((g.coord(x, y) - g.coord(x - 1, y)).norm() < 2.0);
            }
        }
    }

    #[test]
    fn far_plane_warp_approaches_infinite_homography() {
        let reference = test_camera();
        let r = rot(Vector3::new(0.2, 1.0, 0.1), 0.05);
        let near = Camera::simple(100.0, 32.0, 24.0, r, Vector3::new(0.0, 0.0, 0.0)).unwrap();
        let far = Camera::simple(100.0, 32.0, 24.0, r, Vector3::new(5.0, -3.0, 1.0)).unwrap();
        let g0 = warp_grid(&reference, &near, 1e12, 64, 48);
        let g1 = warp_grid(&reference, &far, 1e12, 64, 48);
        let a = near.m() * reference.m_inv;
        for y in (0..48).step_by(7) {
            for x in (0..64).step_by(7) {
                let w = a * Vector3::new(x as f64, y as f64, 1.0);
                let h = Point2::new(w.x / w.z, w.y / w.z);
                assert!((g0.coord(x, y) - h).norm() < 1e-9);
                assert!((g1.coord(x, y) - h).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn nearest_pixel_bounds() {
        assert_eq!(nearest_pixel(&Point2::new(-0.49, 0.0), 4, 3), Some((0, 0)));
        assert_eq!(nearest_pixel(&Point2::new(-0.51, 0.0), 4, 3), None);
        assert_eq!(nearest_pixel(&Point2::new(3.49, 2.49), 4, 3), Some((3, 2)));
        assert_eq!(nearest_pixel(&Point2::new(3.5, 0.0), 4, 3), None);
    }

    fn two_view_plane() -> (Camera, Camera, DepthMap, DepthMap) {
        // Both cameras look straight down +z at the plane z = 5, so the
        // rendered depth is constant and nearest-pixel lookup is exact.
        let reference = test_camera();
        let source =
            Camera::simple(100.0, 32.0, 24.0, Matrix3::identity(), Vector3::new(-0.3, 0.1, 0.0)).unwrap();
        (
            reference,
            source,
            DepthMap::constant(64, 48, 5.0),
            DepthMap::constant(64, 48, 5.0),
        )
    }

    #[test]
    fn exact_depths_reproject_onto_themselves() {
        let (reference, source, _, src_depth) = two_view_plane();
        for (x, y) in [(10.0, 10.0), (32.0, 24.0), (50.0, 40.0)] {
            let p = Point2::new(x, y);
            let r = reproject(&reference, &source, &p, 5.0, &src_depth).unwrap();
            assert!((r.pixel - p).norm() < 1e-6);
            assert!((r.depth - 5.0).abs() < 1e-6);
        }
    }

    #[test]
    fn masked_source_is_invalid() {
        let (reference, source, _, _) = two_view_plane();
        let empty = DepthMap::empty(64, 48);
        assert_eq!(
            reproject(&reference, &source, &Point2::new(32.0, 24.0), 5.0, &empty),
            Err(ReprojectError::Masked)
        );
        let (reference, source, _, src) = two_view_plane();
        assert_eq!(
            reproject(&reference, &source, &Point2::new(0.0, 24.0), 5.0, &src),
            Err(ReprojectError::OutOfBounds)
        );
    }

    #[test]
    fn perturbed_source_depth_matches_scripted_chain() {
        // Independent evaluation: reference at the origin, source translated
        // by c = (0.3, −0.1, 0) with identity rotation, plane z = 5.
        // Reference pixel p at depth 5 lands on X = 5·K⁻¹p̃, source pixel
        // q = K(X − c)/5. With D_j(q) = 5.05 the return point is
        // X′ = c + 5.05·K⁻¹q̃ whose reference depth is simply 5.05, and whose
        // pixel is K X′ / 5.05.
        let (reference, source, _, _) = two_view_plane();
        let perturbed = DepthMap::constant(64, 48, 5.05);
        let p = Point2::new(20.0, 30.0);
        let r = reproject(&reference, &source, &p, 5.0, &perturbed).unwrap();
        let kinv = |u: f64, v: f64| ((u - 32.0) / 100.0, (v - 24.0) / 100.0);
        let (a, b) = kinv(20.0, 30.0);
        let (xw, yw) = (5.0 * a, 5.0 * b);
        let (qx, qy) = (100.0 * (xw - 0.3) / 5.0 + 32.0, 100.0 * (yw + 0.1) / 5.0 + 24.0);
        let (a2, b2) = kinv(qx, qy);
        let (xb, yb) = (0.3 + 5.05 * a2, -0.1 + 5.05 * b2);
        let expected = Point2::new(100.0 * xb / 5.05 + 32.0, 100.0 * yb / 5.05 + 24.0);
        assert_relative_eq!(r.depth, 5.05, epsilon = 1e-12);
        assert_relative_eq!(r.pixel, expected, epsilon = 1e-9);
        let (xi_p, xi_d) = reprojection_errors(&p, &r.pixel, 5.0, r.depth);
        assert_relative_eq!(xi_d, 0.01, epsilon = 1e-12);
        assert!(xi_p > 0.0);
    }

    proptest! {
        #[test]
        fn project_inverts_back_project(
            ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0, angle in 0.0f64..3.0,
            tx in -5.0f64..5.0, ty in -5.0f64..5.0, tz in -5.0f64..5.0,
            px in 0.0f64..640.0, py in 0.0f64..480.0, d in 0.1f64..100.0,
        ) {
            prop_assume!(ax.abs() + ay.abs() + az.abs() > 1e-3);
            let r = rot(Vector3::new(ax, ay, az), angle);
            let k = Matrix3::new(500.0, 0.5, 320.0, 0.0, 480.0, 240.0, 0.0, 0.0, 1.0);
            let cam = Camera::new(k, r, Vector3::new(tx, ty, tz)).unwrap();
            let p = Point2::new(px, py);
            let proj = project(&cam, &back_project(&cam, &p, d)).unwrap();
            prop_assert!((proj.pixel - p).norm() <= 1e-9 * p.coords.norm().max(1.0));
            prop_assert!((proj.depth - d).abs() <= 1e-9 * d);
        }

        #[test]
        fn samples_are_strictly_increasing(
            d_min in 0.01f64..100.0, span in 0.01f64..1000.0, count in 2usize..300, inverse: bool,
        ) {
            let mode = if inverse { DepthSampling::Inverse } else { DepthSampling::Uniform };
            let h = HypothesisSpace::new(d_min, d_min + span, count, mode).unwrap();
            let d = sample_hypotheses(&h);
            prop_assert_eq!(d[0], d_min);
            prop_assert_eq!(d[count - 1], d_min + span);
            prop_assert!(d.windows(2).all(|w| w[0] < w[1]));
            if inverse {
                let step = (1.0 / d[count - 1] - 1.0 / d[0]) / (count - 1) as f64;
                for (k, w) in d.windows(2).enumerate() {
                    let s = 1.0 / w[1] - 1.0 / w[0];
                    prop_assert!((s - step).abs() <= 1e-12 * (1.0 / d_min), "step {} at {}", s, k);
                }
            }
        }
    }
}
