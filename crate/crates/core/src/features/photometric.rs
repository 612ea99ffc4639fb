//! Weight-free photometric features.
//!
//! Channel layout (borders clamp to the nearest pixel):
//!
//! | channel | content                                                         |
//! |---------|-----------------------------------------------------------------|
//! | 0       | grayscale intensity                                             |
//! | 1–9     | `GAIN ·` (3×3 patch entry − patch mean), row-major from top-left |
//! | 10      | `GAIN ·` horizontal central difference `(I(x+1) − I(x−1)) / 2`   |
//! | 11      | `GAIN ·` vertical central difference                             |
//! | 12–31   | zero                                                            |
//!
//! The gain lifts the texture channels out of the `[0, 1]` intensity scale
//! so the variance cost of a mismatch is large enough for the softmax to
//! commit to a depth.

use super::{FeatureMap, FEATURE_CHANNELS};
use crate::maps::ImageBuffer;
use crate::tensor::Tensor;

pub const GAIN: f64 = 256.0;
pub const PATCH_CHANNELS: std::ops::Range<usize> = 1..10;
pub const GRAD_X_CHANNEL: usize = 10;
pub const GRAD_Y_CHANNEL: usize = 11;

pub fn photometric_features(img: &ImageBuffer) -> FeatureMap {
    let (w, h) = (img.width(), img.height());
    let gray: Vec<f64> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| img.gray(x, y)).collect();
    let at = |x: isize, y: isize| -> f64 {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        gray[yc * w + xc]
    };
    let mut t = Tensor::zeros(FEATURE_CHANNELS, h, w);
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let mut patch = [0.0; 9];
            for (k, v) in patch.iter_mut().enumerate() {
                *v = at(xi + (k % 3) as isize - 1, yi + (k / 3) as isize - 1);
            }
            let mean = patch.iter().sum::<f64>() / 9.0;
            t.set(0, y, x, gray[y * w + x]);
            for (k, v) in patch.iter().enumerate() {
                t.set(PATCH_CHANNELS.start + k, y, x, GAIN * (v - mean));
            }
            t.set(GRAD_X_CHANNEL, y, x, GAIN * 0.5 * (at(xi + 1, yi) - at(xi - 1, yi)));
            t.set(GRAD_Y_CHANNEL, y, x, GAIN * 0.5 * (at(xi, yi + 1) - at(xi, yi - 1)));
        }
    }
    FeatureMap::new(t).expect("photometric layout has 32 finite channels")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_no_texture() {
        let img = ImageBuffer::from_fn(9, 7, 3, |_, _, _| 0.4).unwrap();
        let f = photometric_features(&img);
        for c in 1..FEATURE_CHANNELS {
            assert!(f.tensor().channel(c).iter().all(|v| v.abs() < GAIN * 1e-15), "channel {c}");
        }
    }

    #[test]
    fn channel_zero_is_grayscale() {
        let img = ImageBuffer::from_fn(6, 5, 3, |x, y, c| ((x + 2 * y + c) % 7) as f64 / 6.0).unwrap();
        let f = photometric_features(&img);
        for y in 0..5 {
            for x in 0..6 {
                assert_eq!(f.tensor().get(0, y, x), img.gray(x, y));
            }
        }
    }

    #[test]
    fn gradients_of_a_ramp() {
        let img = ImageBuffer::from_fn(8, 6, 1, |x, _, _| x as f64 * 0.1).unwrap();
        let f = photometric_features(&img);
        assert!((f.tensor().get(GRAD_X_CHANNEL, 3, 4) - GAIN * 0.1).abs() < 1e-12);
        assert!(f.tensor().get(GRAD_Y_CHANNEL, 3, 4).abs() < 1e-12);
        // Clamped border: one-sided half difference.
        assert!((f.tensor().get(GRAD_X_CHANNEL, 3, 0) - GAIN * 0.05).abs() < 1e-12);
        for c in 12..FEATURE_CHANNELS {
            assert!(f.tensor().channel(c).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn patch_channels_are_mean_free() {
        let img = ImageBuffer::from_fn(7, 7, 1, |x, y, _| ((x * 3 + y * 5) % 11) as f64 / 10.0).unwrap();
        let f = photometric_features(&img);
        let s: f64 = PATCH_CHANNELS.map(|c| f.tensor().get(c, 3, 3)).sum();
        assert!(s.abs() < 1e-12);
    }
}
