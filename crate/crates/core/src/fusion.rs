//! Depth-map filtering and point-cloud fusion.
//!
//! Every reference pixel is checked against each source view by the
//! reference → source → reference round trip. The dynamic filter turns each
//! round trip into a soft consistency `c = exp(−(ξ_p + λ ξ_d))` and keeps a
//! pixel when the sum over source views reaches `τ`, so a few near-perfect
//! views can outweigh many mediocre ones. The fixed filter instead counts
//! views that pass hard pixel and depth thresholds.

use nalgebra::{Point2, Point3};
use serde::{Deserialize, Serialize};

use crate::geometry::{back_project, nearest_pixel, reproject, reprojection_errors, Camera};
use crate::maps::{ConfidenceMap, DepthMap, ImageBuffer};
use crate::{Error, Result};

/// Consistency below which a source view does not vote on a fused depth.
pub const FUSION_MIN_CONSISTENCY: f64 = 0.049_787_068_367_863_944; // e^-3

/// One view's depth estimate together with its camera.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewEstimate {
    pub camera: Camera,
    pub depth: DepthMap,
    pub confidence: ConfidenceMap,
    pub color: Option<ImageBuffer>,
}

impl ViewEstimate {
    pub fn new(camera: Camera, depth: DepthMap, confidence: ConfidenceMap, color: Option<ImageBuffer>) -> Result<Self> {
        let (w, h) = (depth.width(), depth.height());
        if confidence.width() != w || confidence.height() != h {
            return Err(Error::SizeMismatch(format!(
                "confidence is {}x{}, depth is {w}x{h}",
                confidence.width(),
                confidence.height()
            )));
        }
        if let Some(img) = &color {
            if img.width() != w || img.height() != h {
                return Err(Error::SizeMismatch(format!(
                    "color image is {}x{}, depth is {w}x{h}",
                    img.width(),
                    img.height()
                )));
            }
        }
        Ok(Self {
            camera,
            depth,
            confidence,
            color,
        })
    }

    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }

    fn with_mask(&self, keep: impl Fn(usize, usize) -> bool) -> Self {
        let mut out = self.clone();
        for y in 0..self.height() {
            for x in 0..self.width() {
                if out.depth.get(x, y).is_some() && !keep(x, y) {
                    out.depth.invalidate(x, y);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    /// Weight of the relative depth error against the pixel error.
    pub lambda: f64,
    /// Minimum summed consistency for the dynamic filter.
    pub tau: f64,
    /// Minimum confidence.
    pub phi: f64,
    /// Fixed filter: pixel error bound.
    pub tau1: f64,
    /// Fixed filter: relative depth error bound.
    pub tau2: f64,
    /// Fixed filter: views that must pass both bounds.
    pub min_views: usize,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            lambda: 200.0,
            tau: 1.8,
            phi: 0.4,
            tau1: 1.0,
            tau2: 0.01,
            min_views: 3,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda > 0.0
            && self.tau > 0.0
            && (0.0..=1.0).contains(&self.phi)
            && self.tau1 > 0.0
            && self.tau2 > 0.0
            && self.lambda.is_finite()
            && self.tau.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("fusion parameters {self:?}")))
        }
    }
}

/// Masks pixels whose confidence is below `phi`.
pub fn probability_filter(view: &ViewEstimate, phi: f64) -> ViewEstimate {
    view.with_mask(|x, y| view.confidence.get(x, y) >= phi)
}

/// `exp(−(ξ_p + λ ξ_d))`.
#[inline]
pub fn consistency_from_errors(pixel_error: f64, depth_error: f64, lambda: f64) -> f64 {
    (-(pixel_error + lambda * depth_error)).exp()
}

fn round_trip(reference: &ViewEstimate, source: &ViewEstimate, x: usize, y: usize) -> Option<(f64, f64, f64, Point2<f64>)> {
    let d = reference.depth.get(x, y)?;
    let p = Point2::new(x as f64, y as f64);
    let r = reproject(&reference.camera, &source.camera, &p, d, &source.depth).ok()?;
    let (xp, xd) = reprojection_errors(&p, &r.pixel, d, r.depth);
    Some((xp, xd, r.depth, r.source_pixel))
}

/// Consistency of reference pixel `(x, y)` with one source view; zero when
/// the pixel is masked or the round trip fails.
pub fn pairwise_consistency(reference: &ViewEstimate, source: &ViewEstimate, x: usize, y: usize, lambda: f64) -> f64 {
    round_trip(reference, source, x, y).map_or(0.0, |(xp, xd, _, _)| consistency_from_errors(xp, xd, lambda))
}

/// Summed consistency over all source views, row-major. Masked reference
/// pixels get zero.
pub fn dynamic_consistency_map(reference: &ViewEstimate, sources: &[&ViewEstimate], lambda: f64) -> Vec<f64> {
    let (w, h) = (reference.width(), reference.height());
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            if reference.depth.get(x, y).is_none() {
                continue;
            }
            out[y * w + x] = sources.iter().map(|s| pairwise_consistency(reference, s, x, y, lambda)).sum();
        }
    }
    out
}

/// Keeps pixels with confidence at least `phi` and summed consistency at
/// least `tau`.
pub fn dynamic_filter(reference: &ViewEstimate, sources: &[&ViewEstimate], params: &FusionParams) -> ViewEstimate {
    let prob = probability_filter(reference, params.phi);
    let geo = dynamic_consistency_map(&prob, sources, params.lambda);
    let w = reference.width();
    prob.with_mask(|x, y| geo[y * w + x] >= params.tau)
}

/// Keeps pixels for which at least `min_views` source views have
/// `ξ_p < tau1` and `ξ_d < tau2`.
pub fn fixed_threshold_filter(
    reference: &ViewEstimate,
    sources: &[&ViewEstimate],
    tau1: f64,
    tau2: f64,
    min_views: usize,
) -> ViewEstimate {
    reference.with_mask(|x, y| {
        let passing = sources
            .iter()
            .filter(|s| matches!(round_trip(reference, s, x, y), Some((xp, xd, _, _)) if xp < tau1 && xd < tau2))
            .count();
        passing >= min_views
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>, colors: Option<Vec<[u8; 3]>>) -> Result<Self> {
        if points.iter().any(|p| !p.coords.iter().all(|v| v.is_finite())) {
            return Err(Error::ShapeMismatch("point cloud has non-finite coordinates".into()));
        }
        if let Some(c) = &colors {
            if c.len() != points.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} colors for {} points",
                    c.len(),
                    points.len()
                )));
            }
        }
        Ok(Self { points, colors })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Back-projects every surviving pixel of the (already filtered) views.
///
/// Views are processed in order. Each point's depth is the average of the
/// reference depth (weight 1) and the depths returned by source views with
/// consistency above `e^-3` (weight = consistency). Source pixels that
/// contributed are marked consumed and emit no point of their own. Colors
/// are taken from the reference image when every view has one.
pub fn fuse_point_cloud(views: &[ViewEstimate], lambda: f64) -> PointCloud {
    let mut consumed: Vec<Vec<bool>> = views.iter().map(|v| vec![false; v.depth.len()]).collect();
    let with_color = !views.is_empty() && views.iter().all(|v| v.color.is_some());
    let mut points = Vec::new();
    let mut colors = Vec::new();
    for (i, view) in views.iter().enumerate() {
        let w = view.width();
        for y in 0..view.height() {
            for x in 0..w {
                let Some(d) = view.depth.get(x, y) else { continue };
                if consumed[i][y * w + x] {
                    continue;
                }
                consumed[i][y * w + x] = true;
                let (mut sum, mut weight) = (d, 1.0);
                for (j, src) in views.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let Some((xp, xd, d2, q)) = round_trip(view, src, x, y) else { continue };
                    let c = consistency_from_errors(xp, xd, lambda);
                    if c > FUSION_MIN_CONSISTENCY {
                        sum += c * d2;
                        weight += c;
                        if let Some((qx, qy)) = nearest_pixel(&q, src.width(), src.height()) {
                            consumed[j][qy * src.width() + qx] = true;
                        }
                    }
                }
                points.push(back_project(&view.camera, &Point2::new(x as f64, y as f64), sum / weight));
                if with_color {
                    let img = view.color.as_ref().expect("checked above");
                    let [r, g, b] = img.rgb(x, y);
                    colors.push([to_byte(r), to_byte(g), to_byte(b)]);
                }
            }
        }
    }
    PointCloud {
        points,
        colors: with_color.then_some(colors),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector3};
    use proptest::prelude::*;

    fn cam(f: f64, w: usize, h: usize, t: Vector3<f64>) -> Camera {
        Camera::simple(f, (w / 2) as f64, (h / 2) as f64, Matrix3::identity(), t).unwrap()
    }

    /// Fronto-parallel plane at world z = `z`, seen from a camera translated
    /// in the image plane, has constant depth `z`.
    fn plane_view(f: f64, w: usize, h: usize, t: Vector3<f64>, z: f64) -> ViewEstimate {
        ViewEstimate::new(cam(f, w, h, t), DepthMap::constant(w, h, z), ConfidenceMap::filled(w, h, 1.0), None).unwrap()
    }

    fn only_pixel(v: &ViewEstimate, x: usize, y: usize) -> ViewEstimate {
        v.with_mask(|a, b| (a, b) == (x, y))
    }

    #[test]
    fn consistency_scalars() {
        assert_eq!(consistency_from_errors(0.0, 0.0, 200.0), 1.0);
        let c = consistency_from_errors(1.0, 0.01, 200.0);
        assert!((c - (-3.0f64).exp()).abs() < 1e-9);
        assert!((c - 0.049787).abs() < 1e-6);
        assert_eq!(FUSION_MIN_CONSISTENCY, (-3.0f64).exp());
    }

    #[test]
    fn six_perfect_sources_sum_to_six() {
        let r = plane_view(50.0, 16, 12, Vector3::zeros(), 5.0);
        let srcs: Vec<ViewEstimate> = (1..=6)
            .map(|k| plane_view(50.0, 16, 12, Vector3::new(0.02 * k as f64, 0.0, 0.0), 5.0))
            .collect();
        let refs: Vec<&ViewEstimate> = srcs.iter().collect();
        let map = dynamic_consistency_map(&r, &refs, 200.0);
        // Disparity 50·0.12/5 = 1.2 px at most; keep away from the border.
        // The round trip is exact up to float rounding of the projections.
        for y in 0..12 {
            for x in 0..12 {
                assert!((map[y * 16 + x] - 6.0).abs() < 1e-12, "pixel ({x}, {y})");
            }
        }
        let exact: f64 = (0..6).map(|_| consistency_from_errors(0.0, 0.0, 200.0)).sum();
        assert_eq!(exact, 6.0);
    }

    #[test]
    fn two_perfect_views_pass_dynamic_and_fail_fixed() {
        let r = only_pixel(&plane_view(50.0, 16, 12, Vector3::zeros(), 5.0), 8, 6);
        let good: Vec<ViewEstimate> = [0.01, -0.01]
            .iter()
            .map(|&t| plane_view(50.0, 16, 12, Vector3::new(t, 0.0, 0.0), 5.0))
            .collect();
        // Two masked and two out-of-view sources.
        let mut bad: Vec<ViewEstimate> = (0..2)
            .map(|_| {
                let mut v = plane_view(50.0, 16, 12, Vector3::new(0.0, 0.01, 0.0), 5.0);
                v.depth = DepthMap::empty(16, 12);
                v
            })
            .collect();
        bad.extend([3.0, -3.0].iter().map(|&t| plane_view(50.0, 16, 12, Vector3::new(t, 0.0, 0.0), 5.0)));
        let all: Vec<&ViewEstimate> = good.iter().chain(&bad).collect();
        for b in &bad {
            assert_eq!(pairwise_consistency(&r, b, 8, 6, 200.0), 0.0);
        }
        let map = dynamic_consistency_map(&r, &all, 200.0);
        assert_eq!(map[6 * 16 + 8], 2.0);
        let params = FusionParams::default();
        assert_eq!(dynamic_filter(&r, &all, &params).depth.get(8, 6), Some(5.0));
        assert_eq!(fixed_threshold_filter(&r, &all, 1.0, 0.01, 3).depth.get(8, 6), None);
        // All sources invalid: filtered.
        let bad_refs: Vec<&ViewEstimate> = bad.iter().collect();
        assert_eq!(dynamic_filter(&r, &bad_refs, &params).depth.valid_count(), 0);
    }

    #[test]
    fn fixed_filter_counts_views_inside_both_bounds() {
        // Source depth 5.025 against reference depth 5: the return trip
        // lands at depth 5.025 (ξ_d = 0.005) and, with f·b = 502.5, moves
        // the pixel by 502.5 · (1/5 − 1/5.025) = 0.5.
        let (f, w, h, b) = (1000.0, 300, 300, 0.5025);
        let r = only_pixel(&plane_view(f, w, h, Vector3::zeros(), 5.0), 150, 150);
        let srcs: Vec<ViewEstimate> = [Vector3::new(b, 0.0, 0.0), Vector3::new(-b, 0.0, 0.0), Vector3::new(0.0, b, 0.0)]
            .into_iter()
            .map(|t| plane_view(f, w, h, t, 5.025))
            .collect();
        let refs: Vec<&ViewEstimate> = srcs.iter().collect();
        for s in &refs {
            let (xp, xd, _, _) = round_trip(&r, s, 150, 150).unwrap();
            assert!((xp - 0.5).abs() < 1e-9 && (xd - 0.005).abs() < 1e-12);
        }
        assert!(fixed_threshold_filter(&r, &refs, 1.0, 0.01, 3).depth.get(150, 150).is_some());
        assert!(fixed_threshold_filter(&r, &refs, 1.0, 0.01, 4).depth.get(150, 150).is_none());
        // Strict bound: ξ_p = 0.5 is not below 0.5.
        assert!(fixed_threshold_filter(&r, &refs, 0.5 - 1e-6, 0.01, 1).depth.get(150, 150).is_none());
    }

    #[test]
    fn probability_filter_extremes_and_scan() {
        let mut v = plane_view(50.0, 8, 6, Vector3::zeros(), 3.0);
        let conf: Vec<f64> = (0..48).map(|i| ((i * 37) % 48) as f64 / 47.0).collect();
        v.confidence = ConfidenceMap::new(8, 6, conf.clone()).unwrap();
        assert_eq!(probability_filter(&v, 0.0).depth.valid_count(), 48);
        assert_eq!(probability_filter(&v, 1.0 + 1e-12).depth.valid_count(), 0);
        let f = probability_filter(&v, 0.4);
        for (i, &c) in conf.iter().enumerate() {
            assert_eq!(f.depth.mask()[i], c >= 0.4);
        }
    }

    #[test]
    fn dynamic_filter_thresholds_and_idempotence() {
        let r = plane_view(50.0, 16, 12, Vector3::zeros(), 5.0);
        let srcs: Vec<ViewEstimate> = [0.2, -0.2, 0.4]
            .iter()
            .map(|&t| plane_view(50.0, 16, 12, Vector3::new(t, 0.0, 0.0), 5.0 * (1.0 + 0.002 * t)))
            .collect();
        let refs: Vec<&ViewEstimate> = srcs.iter().collect();
        let p = FusionParams::default();
        let once = dynamic_filter(&r, &refs, &p);
        // Border columns lose sources to the image edge; the interior keeps.
        let kept = once.depth.valid_count();
        assert!(kept > 0 && kept < 16 * 12, "kept {kept}");
        assert_eq!(dynamic_filter(&once, &refs, &p), once);
        let zero = FusionParams { tau: 0.0, ..p };
        assert_eq!(dynamic_filter(&r, &refs, &zero).depth.valid_count(), 16 * 12);
        let huge = FusionParams { tau: 3.5, ..p };
        assert_eq!(dynamic_filter(&r, &refs, &huge).depth.valid_count(), 0);
        // Oracle scan of the same rule.
        let map = dynamic_consistency_map(&r, &refs, p.lambda);
        for (i, &keep) in once.depth.mask().iter().enumerate() {
            assert_eq!(keep, map[i] >= p.tau);
        }
    }

    #[test]
    fn single_view_fuses_onto_plane() {
        let mut v = plane_view(50.0, 8, 6, Vector3::new(0.3, -0.1, 0.0), 4.0);
        v.color = Some(ImageBuffer::from_fn(8, 6, 3, |x, _, c| if c == 0 { x as f64 / 7.0 } else { 0.5 }).unwrap());
        let cloud = fuse_point_cloud(std::slice::from_ref(&v), 200.0);
        assert_eq!(cloud.len(), 48);
        assert!(cloud.points.iter().all(|p| (p.z - 4.0).abs() < 1e-6));
        let colors = cloud.colors.unwrap();
        assert_eq!(colors[7], [255, 128, 128]);
        assert_eq!(colors[0], [0, 128, 128]);
    }

    #[test]
    fn empty_masks_fuse_to_nothing() {
        let mut v = plane_view(50.0, 8, 6, Vector3::zeros(), 4.0);
        v.depth = DepthMap::empty(8, 6);
        assert!(fuse_point_cloud(&[v.clone(), v], 200.0).is_empty());
        assert!(fuse_point_cloud(&[], 200.0).is_empty());
    }

    #[test]
    fn overlapping_views_do_not_duplicate() {
        let views: Vec<ViewEstimate> = (0..3)
            .map(|k| plane_view(50.0, 16, 12, Vector3::new(0.1 * k as f64, 0.0, 0.0), 5.0))
            .collect();
        let cloud = fuse_point_cloud(&views, 200.0);
        // Shifts of 1 px per view: every view after the first only adds the
        // columns the earlier views cannot see.
        assert_eq!(cloud.len(), 16 * 12 + 12 + 12);
    }

    #[test]
    fn params_validation() {
        assert!(FusionParams::default().validate().is_ok());
        assert!(FusionParams { phi: 1.5, ..Default::default() }.validate().is_err());
        assert!(FusionParams { lambda: 0.0, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn consistency_is_bounded_and_monotone(xp in 0.0..10.0f64, xd in 0.0..0.1f64, dp in 1e-3..1.0f64, lambda in 1.0..500.0f64) {
            let c = consistency_from_errors(xp, xd, lambda);
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!(consistency_from_errors(xp + dp, xd, lambda) < c || c == 0.0);
            prop_assert!(consistency_from_errors(xp, xd + dp * 1e-2, lambda) < c || c == 0.0);
            prop_assert!(consistency_from_errors(xp, xd, lambda + dp) <= c);
        }

        #[test]
        fn raising_tau_never_enlarges_kept_set(t1 in 0.0..4.0f64, t2 in 0.0..4.0f64, depth_scale in 0.0..0.02f64) {
            let r = plane_view(50.0, 10, 8, Vector3::zeros(), 5.0);
            let srcs: Vec<ViewEstimate> = [0.02, -0.02, 0.04]
                .iter()
                .enumerate()
                .map(|(k, &t)| plane_view(50.0, 10, 8, Vector3::new(t, 0.0, 0.0), 5.0 * (1.0 + depth_scale * k as f64)))
                .collect();
            let refs: Vec<&ViewEstimate> = srcs.iter().collect();
            let (lo, hi) = (t1.min(t2), t1.max(t2));
            let p = FusionParams::default();
            let a = dynamic_filter(&r, &refs, &FusionParams { tau: lo, ..p });
            let b = dynamic_filter(&r, &refs, &FusionParams { tau: hi, ..p });
            for (ka, kb) in a.depth.mask().iter().zip(b.depth.mask()) {
                prop_assert!(*ka || !*kb);
            }
        }
    }
}
