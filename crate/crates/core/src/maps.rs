//! Per-view raster types: input images, depth maps and confidence maps.

use crate::{Error, Result};

/// Row-major, pixel-interleaved image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::ShapeMismatch(format!(
                "images must have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("image contains non-finite values".into()));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Luma with the Rec. 601 weights; single-channel images pass through.
    #[inline]
    pub fn gray(&self, x: usize, y: usize) -> f64 {
        if self.channels == 1 {
            self.get(x, y, 0)
        } else {
            0.299 * self.get(x, y, 0) + 0.587 * self.get(x, y, 1) + 0.114 * self.get(x, y, 2)
        }
    }

    pub fn rgb(&self, x: usize, y: usize) -> [f64; 3] {
        if self.channels == 1 {
            let v = self.get(x, y, 0);
            [v, v, v]
        } else {
            [self.get(x, y, 0), self.get(x, y, 1), self.get(x, y, 2)]
        }
    }
}

/// Per-pixel depth with a validity mask.
#[derive(Debug, Clone)]
pub struct DepthMap {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, depth: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if depth.len() != width * height || valid.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "depth map {width}x{height} built from {} depths and {} mask entries",
                depth.len(),
                valid.len()
            )));
        }
        Ok(Self {
            width,
            height,
            depth,
            valid,
        })
    }

    /// All pixels invalid.
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    /// All pixels valid at `depth`.
    pub fn constant(width: usize, height: usize, depth: f64) -> Self {
        Self {
            width,
            height,
            depth: vec![depth; width * height],
            valid: vec![true; width * height],
        }
    }

    /// NaN entries become invalid pixels.
    pub fn from_nan_encoded(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        let valid = values.iter().map(|v| v.is_finite()).collect();
        let depth = values.iter().map(|&v| if v.is_finite() { v } else { 0.0 }).collect();
        Self::new(width, height, depth, valid)
    }

    pub fn to_nan_encoded(&self) -> Vec<f64> {
        self.depth
            .iter()
            .zip(&self.valid)
            .map(|(&d, &ok)| if ok { d } else { f64::NAN })
            .collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Depth at an integer pixel, `None` when masked or out of bounds.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        if x >= self.width || y >= self.height {
            return None;
        }
        let i = self.index(x, y);
        self.valid[i].then_some(self.depth[i])
    }

    pub fn set(&mut self, x: usize, y: usize, depth: f64) {
        let i = self.index(x, y);
        self.depth[i] = depth;
        self.valid[i] = true;
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = self.index(x, y);
        self.valid[i] = false;
    }

    pub fn depths(&self) -> &[f64] {
        &self.depth
    }

    pub fn depths_mut(&mut self) -> &mut [f64] {
        &mut self.depth
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn mask_mut(&mut self) -> &mut [bool] {
        &mut self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Equal when sizes, masks and valid depths agree; whatever is stored under
/// a masked pixel is ignored.
impl PartialEq for DepthMap {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.valid == other.valid
            && self
                .depth
                .iter()
                .zip(&other.depth)
                .zip(&self.valid)
                .all(|((a, b), &ok)| !ok || a == b)
    }
}

/// Per-pixel probability in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ConfidenceMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "confidence map {width}x{height} built from {} values",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::ShapeMismatch(format!("confidence {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            values: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_bad_channel_counts() {
        assert!(ImageBuffer::new(1, 1, 2, vec![0.0, 0.0]).is_err());
        assert!(ImageBuffer::new(2, 1, 1, vec![0.0]).is_err());
        assert!(ImageBuffer::new(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn gray_uses_rec601_weights() {
        let img = ImageBuffer::new(1, 1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(img.gray(0, 0), 0.299);
    }

    #[test]
    fn nan_encoding_round_trips_mask() {
        let vals = [1.0, f64::NAN, 3.0, f64::NAN];
        let dm = DepthMap::from_nan_encoded(2, 2, &vals).unwrap();
        assert_eq!(dm.valid_count(), 2);
        assert_eq!(dm.get(1, 0), None);
        assert_eq!(dm.get(0, 1), Some(3.0));
        let back = dm.to_nan_encoded();
        assert!(back[1].is_nan() && back[3].is_nan());
        assert_eq!(back[2], 3.0);
    }

    #[test]
    fn confidence_range_is_enforced() {
        assert!(ConfidenceMap::new(1, 1, vec![1.5]).is_err());
        assert!(ConfidenceMap::new(1, 1, vec![0.5]).is_ok());
    }
}
