//! Dense channel-major feature tensors.
//!
//! Every [`Tensor`] registers itself with a per-thread live/peak counter so
//! the streaming stages can prove their working set does not grow with the
//! number of depth hypotheses. See [`stats`].

use std::cell::Cell;
use std::fmt;

use crate::{Error, Result};

thread_local! {
    static LIVE_TENSORS: Cell<usize> = const { Cell::new(0) };
    static PEAK_TENSORS: Cell<usize> = const { Cell::new(0) };
    static LIVE_BYTES: Cell<usize> = const { Cell::new(0) };
    static PEAK_BYTES: Cell<usize> = const { Cell::new(0) };
}

/// Snapshot of the tensor allocation counters for the calling thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AllocStats {
    pub live_tensors: usize,
    pub peak_tensors: usize,
    pub live_bytes: usize,
    pub peak_bytes: usize,
}

pub fn stats() -> AllocStats {
    AllocStats {
        live_tensors: LIVE_TENSORS.with(Cell::get),
        peak_tensors: PEAK_TENSORS.with(Cell::get),
        live_bytes: LIVE_BYTES.with(Cell::get),
        peak_bytes: PEAK_BYTES.with(Cell::get),
    }
}

/// Resets the peak counters to the current live values.
pub fn reset_peak() {
    PEAK_TENSORS.with(|p| p.set(LIVE_TENSORS.with(Cell::get)));
    PEAK_BYTES.with(|p| p.set(LIVE_BYTES.with(Cell::get)));
}

fn track_alloc(bytes: usize) {
    let live = LIVE_TENSORS.with(|c| {
        c.set(c.get() + 1);
        c.get()
    });
    PEAK_TENSORS.with(|p| p.set(p.get().max(live)));
    let live_bytes = LIVE_BYTES.with(|c| {
        c.set(c.get() + bytes);
        c.get()
    });
    PEAK_BYTES.with(|p| p.set(p.get().max(live_bytes)));
}

fn track_free(bytes: usize) {
    LIVE_TENSORS.with(|c| c.set(c.get().saturating_sub(1)));
    LIVE_BYTES.with(|c| c.set(c.get().saturating_sub(bytes)));
}

/// A `channels × height × width` array stored channel-major, row-major.
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::from_vec(channels, height, width, vec![0.0; channels * height * width])
            .expect("length matches by construction")
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {channels}x{height}x{width} tensor",
                data.len()
            )));
        }
        track_alloc(data.len() * std::mem::size_of::<f64>());
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::from_vec(channels, height, width, data).expect("length matches by construction")
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        self.data.iter_mut().for_each(|v| *v = f(*v));
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Stacks tensors of equal spatial size along the channel axis.
    pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::ShapeMismatch("concatenation of zero tensors".into()))?;
        let (h, w) = (first.height, first.width);
        if let Some(bad) = parts.iter().find(|t| t.height != h || t.width != w) {
            return Err(Error::ShapeMismatch(format!(
                "cannot concatenate {}x{} with {}x{}",
                h, w, bad.height, bad.width
            )));
        }
        let channels = parts.iter().map(|t| t.channels).sum();
        let mut data = Vec::with_capacity(channels * h * w);
        for t in parts {
            data.extend_from_slice(&t.data);
        }
        Tensor::from_vec(channels, h, w, data)
    }
}

impl Clone for Tensor {
    fn clone(&self) -> Self {
        Tensor::from_vec(self.channels, self.height, self.width, self.data.clone())
            .expect("clone preserves shape")
    }
}

impl Drop for Tensor {
    fn drop(&mut self) {
        track_free(self.data.len() * std::mem::size_of::<f64>());
    }
}

impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.same_shape(other) && self.data == other.data
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("channels", &self.channels)
            .field("height", &self.height)
            .field("width", &self.width)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counters_follow_lifetimes() {
        let base = stats().live_tensors;
        reset_peak();
        {
            let a = Tensor::zeros(2, 3, 4);
            let _b = a.clone();
            assert_eq!(stats().live_tensors, base + 2);
            assert!(stats().live_bytes >= 2 * 24 * 8);
        }
        assert_eq!(stats().live_tensors, base);
        assert_eq!(stats().peak_tensors, base + 2);
    }

    #[test]
    fn concat_stacks_channels() {
        let a = Tensor::from_fn(1, 2, 2, |_, y, x| (y * 2 + x) as f64);
        let b = Tensor::from_fn(2, 2, 2, |c, _, _| 10.0 + c as f64);
        let c = Tensor::concat(&[&a, &b]).unwrap();
        assert_eq!(c.channels(), 3);
        assert_eq!(c.get(0, 1, 1), 3.0);
        assert_eq!(c.get(2, 0, 1), 11.0);
        let odd = Tensor::zeros(1, 3, 2);
        assert!(Tensor::concat(&[&a, &odd]).is_err());
    }
}
