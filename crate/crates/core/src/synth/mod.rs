//! Synthetic scenes with exact ground truth.
//!
//! A scene is a parametric surface carrying a procedural albedo texture,
//! seen by a ring of cameras. Rendering intersects each pixel ray with the
//! surface exactly and colors the pixel by the albedo at the hit point.
//! Without lighting the color of a surface point is the same in every view,
//! so warping with the true depth reproduces an image up to interpolation.

mod noise;

pub use noise::{lattice_value, value_noise, TextureSpec};

use nalgebra::{Point2, Point3, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::fusion::PointCloud;
use crate::geometry::{project, Camera, DepthSource};
use crate::maps::{DepthMap, ImageBuffer};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surface {
    /// Points with `normal · X = offset`.
    Plane { normal: Vector3<f64>, offset: f64 },
    Sphere { center: Point3<f64>, radius: f64 },
}

impl Surface {
    /// Smallest positive `s` with `origin + s · dir` on the surface.
    pub fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let s = match *self {
            Surface::Plane { normal, offset } => {
                let denom = normal.dot(dir);
                if denom == 0.0 {
                    return None;
                }
                (offset - normal.dot(&origin.coords)) / denom
            }
            Surface::Sphere { center, radius } => {
                let oc = origin - center;
                let a = dir.norm_squared();
                let half_b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = half_b * half_b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let root = disc.sqrt();
                // Numerically stable pair of roots.
                let q = -(half_b + half_b.signum() * root);
                let (r0, r1) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
                let (near, far) = (r0.min(r1), r0.max(r1));
                if near > 0.0 {
                    near
                } else {
                    far
                }
            }
        };
        (s > 0.0 && s.is_finite()).then_some(s)
    }

    /// Unit outward normal at a surface point.
    pub fn normal_at(&self, x: &Point3<f64>) -> Vector3<f64> {
        match *self {
            Surface::Plane { normal, .. } => normal.normalize(),
            Surface::Sphere { center, .. } => (x - center).normalize(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub surface: Surface,
    pub texture: TextureSpec,
    pub width: usize,
    pub height: usize,
}

impl SceneSpec {
    /// RGB albedo of a surface point: one noise value under a fixed tint.
    pub fn albedo(&self, x: &Point3<f64>) -> [f64; 3] {
        let n = self.texture.sample(x);
        [n, 0.85 * n + 0.1, 0.7 * n + 0.2]
    }
}

/// Cameras evenly spaced on a horizontal circle, all aimed at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRigSpec {
    pub views: usize,
    pub radius: f64,
    pub look_at: Point3<f64>,
    /// The ring lies this far below `look_at` along −z.
    pub offset: f64,
    pub focal: f64,
    pub principal: (f64, f64),
}

pub fn make_camera_ring(spec: &CameraRigSpec) -> Result<Vec<Camera>> {
    if spec.views == 0 {
        return Err(Error::InvalidParameter("camera ring needs at least one view".into()));
    }
    let up_hint = Vector3::new(0.0, 1.0, 0.0);
    (0..spec.views)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / spec.views as f64;
            let center = spec.look_at + Vector3::new(spec.radius * theta.cos(), spec.radius * theta.sin(), -spec.offset);
            let z = (spec.look_at - center).normalize();
            let x = up_hint.cross(&z);
            if !(x.norm() > 1e-9) {
                return Err(Error::InvalidCamera("viewing direction is parallel to the y axis".into()));
            }
            let x = x.normalize();
            let y = z.cross(&x);
            let r = nalgebra::Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
            let t = -(r * center.coords);
            Camera::simple(spec.focal, spec.principal.0, spec.principal.1, r, t)
        })
        .collect()
}

/// Exact depth of the first surface hit along the ray through `q`.
pub fn ray_depth(surface: &Surface, camera: &Camera, q: &Point2<f64>) -> Option<f64> {
    // With `dir = M⁻¹ q̃` the camera-frame depth of `C + s · dir` is `s`.
    surface.intersect(&camera.center(), &camera.ray_direction(q))
}

/// Depth lookup that intersects the true surface at the exact sub-pixel
/// location instead of reading a rasterized map.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticDepth<'a> {
    pub surface: &'a Surface,
    pub camera: &'a Camera,
    pub width: usize,
    pub height: usize,
}

impl DepthSource for AnalyticDepth<'_> {
    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    fn depth_at(&self, q: &Point2<f64>) -> Option<f64> {
        ray_depth(self.surface, self.camera, q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub image: ImageBuffer,
    pub depth: DepthMap,
}

pub fn render_view(scene: &SceneSpec, camera: &Camera) -> RenderedView {
    let (w, h) = (scene.width, scene.height);
    let mut depth = DepthMap::empty(w, h);
    let mut rgb = vec![0.0; w * h * 3];
    let c = camera.center();
    for y in 0..h {
        for x in 0..w {
            let dir = camera.ray_direction(&Point2::new(x as f64, y as f64));
            let Some(s) = scene.surface.intersect(&c, &dir) else { continue };
            depth.set(x, y, s);
            let color = scene.albedo(&(c + dir * s));
            rgb[(y * w + x) * 3..][..3].copy_from_slice(&color);
        }
    }
    RenderedView {
        image: ImageBuffer::new(w, h, 3, rgb).expect("albedo is finite"),
        depth,
    }
}

/// Renders every view; fails if some view does not see the surface at all.
pub fn render_scene(scene: &SceneSpec, cameras: &[Camera]) -> Result<Vec<RenderedView>> {
    cameras
        .iter()
        .enumerate()
        .map(|(i, cam)| {
            let v = render_view(scene, cam);
            if v.depth.valid_count() == 0 {
                Err(Error::NoIntersection(i))
            } else {
                Ok(v)
            }
        })
        .collect()
}

/// Noise model for [`perturb_depths`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Perturbation {
    /// Standard deviation of additive Gaussian noise, in depth units.
    pub sigma: f64,
    /// Fraction of valid pixels replaced by uniform random depths.
    pub outlier_fraction: f64,
    /// Range of outlier depths; defaults to the valid depth range of the map.
    pub outlier_range: Option<(f64, f64)>,
}

/// Adds Gaussian noise to every valid pixel, then replaces exactly
/// `⌊ρ · n⌋` of the `n` valid pixels by uniform depths. The mask is kept.
pub fn perturb_depths(depth: &DepthMap, model: &Perturbation, seed: u64) -> Result<DepthMap> {
    if !(model.sigma >= 0.0) || !(0.0..=1.0).contains(&model.outlier_fraction) {
        return Err(Error::InvalidParameter(format!("perturbation {model:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = depth.clone();
    let valid: Vec<usize> = (0..depth.len()).filter(|&i| depth.mask()[i]).collect();
    if model.sigma > 0.0 {
        let normal = Normal::new(0.0, model.sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for &i in &valid {
            out.depths_mut()[i] += normal.sample(&mut rng);
        }
    }
    let count = (model.outlier_fraction * valid.len() as f64).floor() as usize;
    if count > 0 {
        let (lo, hi) = model.outlier_range.unwrap_or_else(|| {
            valid
                .iter()
                .map(|&i| depth.depths()[i])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), d| (a.min(d), b.max(d)))
        });
        if !(lo <= hi) {
            return Err(Error::InvalidParameter(format!("outlier range ({lo}, {hi})")));
        }
        let mut picks = sample(&mut rng, valid.len(), count).into_vec();
        picks.sort_unstable();
        for k in picks {
            out.depths_mut()[valid[k]] = if lo < hi { rng.random_range(lo..hi) } else { lo };
        }
    }
    Ok(out)
}

/// Ground-truth surface points: exact ray hits on a `supersample ×
/// supersample` sub-pixel grid of every view.
pub fn sample_surface_cloud(scene: &SceneSpec, cameras: &[Camera], supersample: usize) -> PointCloud {
    let s = supersample.max(1);
    let mut points = Vec::new();
    for cam in cameras {
        let c = cam.center();
        for y in 0..scene.height * s {
            for x in 0..scene.width * s {
                let q = Point2::new(
                    (x as f64 + 0.5) / s as f64 - 0.5,
                    (y as f64 + 0.5) / s as f64 - 0.5,
                );
                let dir = cam.ray_direction(&q);
                if let Some(t) = scene.surface.intersect(&c, &dir) {
                    points.push(c + dir * t);
                }
            }
        }
    }
    PointCloud { points, colors: None }
}

/// Whether surface point `x` is seen by `camera`: inside the image and the
/// first surface hit along its pixel ray.
pub fn is_visible(surface: &Surface, camera: &Camera, width: usize, height: usize, x: &Point3<f64>) -> bool {
    let Ok(proj) = project(camera, x) else { return false };
    let q = proj.pixel;
    if !(q.x >= -0.5 && q.y >= -0.5 && q.x < width as f64 - 0.5 && q.y < height as f64 - 0.5) {
        return false;
    }
    ray_depth(surface, camera, &q).is_some_and(|d| (d - proj.depth).abs() <= 1e-9 * proj.depth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    Plane,
    Sphere,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plane" => Ok(SceneKind::Plane),
            "sphere" => Ok(SceneKind::Sphere),
            other => Err(Error::InvalidParameter(format!("unknown scene {other:?}"))),
        }
    }
}

/// Pixels per lattice cell of the finest-but-one texture octave.
const TEXTURE_PIXELS: f64 = 3.0;

/// Scene and rig used by the command line and the end-to-end tests.
///
/// The plane is seen under a narrow field of view from a ring about a third
/// as wide as its height above the ring, so every view covers nearly the
/// same patch. The sphere is framed whole.
pub fn preset(kind: SceneKind, views: usize, width: usize, height: usize, seed: u64) -> (SceneSpec, CameraRigSpec) {
    let principal = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let (surface, focal, radius, offset) = match kind {
        SceneKind::Plane => (
            Surface::Plane {
                normal: Vector3::z(),
                offset: 0.0,
            },
            10.92 * width as f64,
            0.35,
            1.0,
        ),
        SceneKind::Sphere => (
            Surface::Sphere {
                center: Point3::origin(),
                radius: 0.3,
            },
            1.2 * width as f64,
            0.5,
            1.0,
        ),
    };
    let distance: f64 = f64::hypot(radius, offset);
    let rig = CameraRigSpec {
        views,
        radius,
        look_at: Point3::origin(),
        offset,
        focal,
        principal,
    };
    let scene = SceneSpec {
        surface,
        texture: TextureSpec {
            seed,
            frequency: focal / (distance * TEXTURE_PIXELS * 2.0),
            octaves: 3,
        },
        width,
        height,
    };
    (scene, rig)
}

/// Rendered views of a scene plus the depth range they span.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub scene: SceneSpec,
    pub cameras: Vec<Camera>,
    pub views: Vec<RenderedView>,
    /// Smallest and largest ground-truth depth over all views.
    pub depth_range: (f64, f64),
}

impl Dataset {
    pub fn generate(scene: SceneSpec, rig: &CameraRigSpec) -> Result<Self> {
        let cameras = make_camera_ring(rig)?;
        let views = render_scene(&scene, &cameras)?;
        let depth_range = views
            .iter()
            .flat_map(|v| v.depth.depths().iter().zip(v.depth.mask()).filter(|(_, &m)| m).map(|(&d, _)| d))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), d| (a.min(d), b.max(d)));
        Ok(Self {
            scene,
            cameras,
            views,
            depth_range,
        })
    }

    pub fn preset(kind: SceneKind, views: usize, width: usize, height: usize, seed: u64) -> Result<Self> {
        let (scene, rig) = preset(kind, views, width, height, seed);
        Self::generate(scene, &rig)
    }

    /// Hypothesis range covering every view with a relative margin.
    pub fn padded_range(&self, margin: f64) -> (f64, f64) {
        let (lo, hi) = self.depth_range;
        let pad = margin * (hi - lo).max(1e-9 * hi);
        (lo - pad, hi + pad)
    }

    pub fn analytic_depth(&self, view: usize) -> AnalyticDepth<'_> {
        AnalyticDepth {
            surface: &self.scene.surface,
            camera: &self.cameras[view],
            width: self.scene.width,
            height: self.scene.height,
        }
    }

    /// Ring neighbors of each view, nearest first.
    pub fn ring_pairs(&self, sources: usize) -> Vec<Vec<usize>> {
        ring_pairs(self.cameras.len(), sources)
    }
}

/// For each of `n` ring views, up to `sources` other views ordered by ring
/// distance (alternating right, left).
pub fn ring_pairs(n: usize, sources: usize) -> Vec<Vec<usize>> {
    (0..n)
        .map(|i| {
            let mut out = Vec::new();
            for step in 1..n {
                for j in [(i + step) % n, (i + n - step % n) % n] {
                    if j != i && !out.contains(&j) && out.len() < sources {
                        out.push(j);
                    }
                }
            }
            out
        })
        .collect()
}
