//! Per-view feature extraction.
//!
//! Two extractors produce the same [`FeatureMap`] shape: the learned
//! dilated-convolution network in [`drenet`] and the weight-free
//! [`photometric`] layout used for end-to-end runs without trained weights.

pub mod drenet;
pub mod photometric;

pub use crate::layers::{conv2d, group_norm_relu, ConvLayerWeights, GroupNorm};
pub use drenet::{drenet_forward, DrenetWeights};
pub use photometric::photometric_features;

use crate::tensor::Tensor;
use crate::{Error, Result};

pub const FEATURE_CHANNELS: usize = 32;

/// A full-resolution 32-channel feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap(Tensor);

impl FeatureMap {
    pub fn new(tensor: Tensor) -> Result<Self> {
        if tensor.channels() != FEATURE_CHANNELS {
            return Err(Error::ChannelMismatch {
                expected: FEATURE_CHANNELS,
                actual: tensor.channels(),
            });
        }
        if !tensor.is_finite() {
            return Err(Error::ShapeMismatch("feature map contains non-finite values".into()));
        }
        Ok(Self(tensor))
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    /// Bilinear sample of every channel at `(x, y)` into `out`.
    ///
    /// `(x, y)` must lie in `[0, W−1] × [0, H−1]`. Integer coordinates read
    /// the stored values exactly.
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f64]) {
        let (w, h) = (self.width(), self.height());
        debug_assert!(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64);
        let x0 = (x.floor() as usize).min(w - 1);
        let y0 = (y.floor() as usize).min(h - 1);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let (i00, i01, i10, i11) = (y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1);
        for (c, o) in out.iter_mut().enumerate() {
            let plane = self.0.channel(c);
            *o = if fx == 0.0 && fy == 0.0 {
                plane[i00]
            } else {
                let top = plane[i00] + fx * (plane[i01] - plane[i00]);
                let bottom = plane[i10] + fx * (plane[i11] - plane[i10]);
                top + fy * (bottom - top)
            };
        }
    }
}

/// Which extractor a pipeline run uses.
#[derive(Debug, Clone)]
pub enum FeatureExtractor {
    Drenet(Box<DrenetWeights>),
    Photometric,
}

impl FeatureExtractor {
    pub fn extract(&self, img: &crate::maps::ImageBuffer) -> Result<FeatureMap> {
        match self {
            FeatureExtractor::Drenet(w) => drenet_forward(img, w),
            FeatureExtractor::Photometric => Ok(photometric_features(img)),
        }
    }
}
