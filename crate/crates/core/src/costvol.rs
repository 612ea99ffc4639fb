//! Plane-sweep matching cost, one depth slice at a time.
//!
//! For a hypothesis depth every source feature map is warped onto the
//! reference grid and, per pixel and channel, the population variance of
//! the reference feature and all valid warped samples is the matching cost.
//! Samples that fall outside a source image are dropped rather than
//! zero-filled, so each pixel carries its own view count.

use crate::features::{FeatureMap, FEATURE_CHANNELS};
use crate::geometry::{warp_grid, Camera, HypothesisSpace};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Matching cost for one depth hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSlice {
    pub index: usize,
    pub depth: f64,
    /// `32 × H × W`, non-negative.
    pub cost: Tensor,
    /// Views that contributed at each pixel, reference included.
    pub views: Vec<u16>,
}

impl CostSlice {
    pub fn width(&self) -> usize {
        self.cost.width()
    }

    pub fn height(&self) -> usize {
        self.cost.height()
    }

    /// Pixels where no source view contributed; their cost is zero by
    /// construction and carries no matching evidence.
    pub fn is_unobserved(&self, x: usize, y: usize) -> bool {
        self.views[y * self.width() + x] <= 1
    }
}

/// Reference and source views of one plane sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepViews<'a> {
    pub reference: &'a FeatureMap,
    pub reference_camera: &'a Camera,
    pub sources: &'a [&'a FeatureMap],
    pub source_cameras: &'a [&'a Camera],
}

impl SweepViews<'_> {
    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::SizeMismatch("plane sweep needs at least one source view".into()));
        }
        if self.sources.len() != self.source_cameras.len() {
            return Err(Error::SizeMismatch(format!(
                "{} source feature maps but {} source cameras",
                self.sources.len(),
                self.source_cameras.len()
            )));
        }
        let (w, h) = (self.reference.width(), self.reference.height());
        if let Some(bad) = self.sources.iter().find(|f| f.width() != w || f.height() != h) {
            return Err(Error::SizeMismatch(format!(
                "source features are {}x{}, reference is {w}x{h}",
                bad.width(),
                bad.height()
            )));
        }
        Ok(())
    }
}

pub fn build_cost_slice(views: &SweepViews<'_>, index: usize, depth: f64) -> Result<CostSlice> {
    views.validate()?;
    let reference = views.reference;
    let (w, h) = (reference.width(), reference.height());
    let n = w * h;
    // Welford accumulation: `mean` starts at the reference features and
    // `m2` ends up as the sum of squared deviations.
    let mut mean = reference.tensor().clone();
    let mut m2 = Tensor::zeros(FEATURE_CHANNELS, h, w);
    let mut count = vec![1u16; n];
    let mut sample = [0.0; FEATURE_CHANNELS];
    let (mean_buf, m2_buf) = (mean.as_mut_slice(), m2.as_mut_slice());
    for (src, cam) in views.sources.iter().zip(views.source_cameras) {
        let grid = warp_grid(views.reference_camera, cam, depth, w, h);
        for y in 0..h {
            for x in 0..w {
                let Some(q) = grid.get(x, y) else { continue };
                src.sample_bilinear(q.x, q.y, &mut sample);
                let i = y * w + x;
                count[i] += 1;
                let k = count[i] as f64;
                for (c, &v) in sample.iter().enumerate() {
                    let j = c * n + i;
                    let delta = v - mean_buf[j];
                    mean_buf[j] += delta / k;
                    m2_buf[j] += delta * (v - mean_buf[j]);
                }
            }
        }
    }
    drop(mean);
    for c in 0..FEATURE_CHANNELS {
        for (v, &k) in m2.channel_mut(c).iter_mut().zip(&count) {
            *v = (*v / k as f64).max(0.0);
        }
    }
    Ok(CostSlice {
        index,
        depth,
        cost: m2,
        views: count,
    })
}

/// Lazily yields the `D` cost slices of a sweep in increasing depth order.
/// Only the slice being built is alive inside the stream.
pub struct CostVolumeStream<'a> {
    views: SweepViews<'a>,
    hypotheses: HypothesisSpace,
    next: usize,
}

pub fn cost_volume_stream<'a>(views: SweepViews<'a>, hypotheses: HypothesisSpace) -> Result<CostVolumeStream<'a>> {
    views.validate()?;
    Ok(CostVolumeStream {
        views,
        hypotheses,
        next: 0,
    })
}

impl Iterator for CostVolumeStream<'_> {
    type Item = Result<CostSlice>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.hypotheses.count() {
            return None;
        }
        let i = self.next;
        self.next += 1;
        Some(build_cost_slice(&self.views, i, self.hypotheses.depth(i)))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.hypotheses.count() - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for CostVolumeStream<'_> {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DepthSampling;
    use nalgebra::{Matrix3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam(tx: f64) -> Camera {
        Camera::simple(40.0, 8.0, 6.0, Matrix3::identity(), Vector3::new(tx, 0.0, 0.0)).unwrap()
    }

    fn random_features(rng: &mut ChaCha8Rng, w: usize, h: usize) -> FeatureMap {
        FeatureMap::new(Tensor::from_fn(FEATURE_CHANNELS, h, w, |_, _, _| rng.random_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn identical_views_have_zero_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_features(&mut rng, 16, 12);
        let c = cam(0.0);
        let views = SweepViews {
            reference: &f,
            reference_camera: &c,
            sources: &[&f, &f],
            source_cameras: &[&c, &c],
        };
        let s = build_cost_slice(&views, 0, 3.0).unwrap();
        assert!(s.cost.as_slice().iter().all(|&v| v == 0.0));
        assert!(s.views.iter().all(|&k| k == 3));
    }

    #[test]
    fn two_views_offset_by_two_cost_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_features(&mut rng, 10, 8);
        let g = FeatureMap::new(Tensor::from_fn(FEATURE_CHANNELS, 8, 10, |c, y, x| f.tensor().get(c, y, x) + 2.0)).unwrap();
        let c = cam(0.0);
        let views = SweepViews {
            reference: &f,
            reference_camera: &c,
            sources: &[&g],
            source_cameras: &[&c],
        };
        let s = build_cost_slice(&views, 0, 5.0).unwrap();
        assert!(s.cost.as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn out_of_view_pixels_are_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (f, g) = (random_features(&mut rng, 16, 12), random_features(&mut rng, 16, 12));
        let (c0, c1) = (cam(0.0), cam(-0.5));
        let views = SweepViews {
            reference: &f,
            reference_camera: &c0,
            sources: &[&g],
            source_cameras: &[&c1],
        };
        // Disparity 40·0.5/2 = 10 px: the left 10 columns leave the source.
        let s = build_cost_slice(&views, 0, 2.0).unwrap();
        assert!(s.is_unobserved(3, 5));
        assert_eq!(s.cost.get(7, 5, 3), 0.0);
        assert!(!s.is_unobserved(12, 5));
    }

    #[test]
    fn matches_two_pass_variance_and_is_order_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let feats: Vec<FeatureMap> = (0..4).map(|_| random_features(&mut rng, 12, 9)).collect();
        let cams: Vec<Camera> = [0.0, 0.05, -0.04, 0.1].iter().map(|&t| cam(t)).collect();
        let srcs: Vec<&FeatureMap> = feats[1..].iter().collect();
        let src_cams: Vec<&Camera> = cams[1..].iter().collect();
        let views = SweepViews {
            reference: &feats[0],
            reference_camera: &cams[0],
            sources: &srcs,
            source_cameras: &src_cams,
        };
        let s = build_cost_slice(&views, 0, 4.0).unwrap();

        // Two-pass oracle from explicitly warped samples.
        let mut buf = [0.0; FEATURE_CHANNELS];
        for y in 0..9 {
            for x in 0..12 {
                let mut samples: Vec<[f64; FEATURE_CHANNELS]> = Vec::new();
                let mut r = [0.0; FEATURE_CHANNELS];
                feats[0].sample_bilinear(x as f64, y as f64, &mut r);
                samples.push(r);
                for (f, c) in srcs.iter().zip(&src_cams) {
                    let g = warp_grid(&cams[0], c, 4.0, 12, 9);
                    if let Some(q) = g.get(x, y) {
                        f.sample_bilinear(q.x, q.y, &mut buf);
                        samples.push(buf);
                    }
                }
                assert_eq!(s.views[y * 12 + x] as usize, samples.len());
                for c in 0..FEATURE_CHANNELS {
                    let n = samples.len() as f64;
                    let mean = samples.iter().map(|v| v[c]).sum::<f64>() / n;
                    let var = samples.iter().map(|v| (v[c] - mean).powi(2)).sum::<f64>() / n;
                    assert!((s.cost.get(c, y, x) - var).abs() < 1e-12);
                }
            }
        }

        let rev_srcs: Vec<&FeatureMap> = srcs.iter().rev().copied().collect();
        let rev_cams: Vec<&Camera> = src_cams.iter().rev().copied().collect();
        let reversed = SweepViews {
            sources: &rev_srcs,
            source_cameras: &rev_cams,
            ..views
        };
        let r = build_cost_slice(&reversed, 0, 4.0).unwrap();
        for (a, b) in s.cost.as_slice().iter().zip(r.cost.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stream_equals_independent_slices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (f, g) = (random_features(&mut rng, 8, 6), random_features(&mut rng, 8, 6));
        let (c0, c1) = (cam(0.0), cam(0.02));
        let views = SweepViews {
            reference: &f,
            reference_camera: &c0,
            sources: &[&g],
            source_cameras: &[&c1],
        };
        let hyp = HypothesisSpace::new(2.0, 6.0, 8, DepthSampling::Inverse).unwrap();
        let slices: Vec<CostSlice> = cost_volume_stream(views, hyp).unwrap().map(|s| s.unwrap()).collect();
        assert_eq!(slices.len(), 8);
        for (i, s) in slices.iter().enumerate() {
            assert_eq!(s.index, i);
            assert_eq!(*s, build_cost_slice(&views, i, hyp.depth(i)).unwrap());
        }
    }

    #[test]
    fn size_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (f, g) = (random_features(&mut rng, 8, 6), random_features(&mut rng, 9, 6));
        let c = cam(0.0);
        let views = SweepViews {
            reference: &f,
            reference_camera: &c,
            sources: &[&g],
            source_cameras: &[&c],
        };
        assert!(matches!(build_cost_slice(&views, 0, 1.0), Err(Error::SizeMismatch(_))));
        let none = SweepViews {
            sources: &[],
            source_cameras: &[],
            ..views
        };
        assert!(build_cost_slice(&none, 0, 1.0).is_err());
    }
}
