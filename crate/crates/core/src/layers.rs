//! Forward-only 2D layers shared by the feature extractor and the recurrent
//! regularizer. All convolutions are 3×3, stride 1, zero padded by their
//! dilation so the spatial size is preserved.

use rand::Rng;

use crate::tensor::Tensor;
use crate::{Error, Result};

pub const GROUP_NORM_EPS: f64 = 1e-5;
const KERNEL_AREA: usize = 9;

/// Per-channel affine parameters of a group normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupNorm {
    pub groups: usize,
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl GroupNorm {
    pub fn identity(channels: usize, groups: usize) -> Self {
        Self {
            groups,
            scale: vec![1.0; channels],
            shift: vec![0.0; channels],
        }
    }
}

/// A 3×3 convolution, optionally followed by group normalization and ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerWeights {
    in_channels: usize,
    out_channels: usize,
    /// `out × in × 3 × 3`, row-major.
    kernel: Vec<f64>,
    bias: Vec<f64>,
    dilation: usize,
    norm: Option<GroupNorm>,
}

impl ConvLayerWeights {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: Vec<f64>,
        bias: Vec<f64>,
        dilation: usize,
        norm: Option<GroupNorm>,
    ) -> Result<Self> {
        if kernel.len() != out_channels * in_channels * KERNEL_AREA {
            return Err(Error::ShapeMismatch(format!(
                "kernel has {} values, expected {out_channels}x{in_channels}x3x3",
                kernel.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::ShapeMismatch(format!(
                "bias has {} values for {out_channels} outputs",
                bias.len()
            )));
        }
        if dilation == 0 {
            return Err(Error::ShapeMismatch("dilation must be at least 1".into()));
        }
        if kernel.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("non-finite convolution weights".into()));
        }
        if let Some(gn) = &norm {
            if gn.groups == 0 || out_channels % gn.groups != 0 {
                return Err(Error::ShapeMismatch(format!(
                    "{} groups do not divide {out_channels} channels",
                    gn.groups
                )));
            }
            if gn.scale.len() != out_channels || gn.shift.len() != out_channels {
                return Err(Error::ShapeMismatch(
                    "group norm scale/shift length differs from channel count".into(),
                ));
            }
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            bias,
            dilation,
            norm,
        })
    }

    pub fn zeros(in_channels: usize, out_channels: usize, dilation: usize, groups: Option<usize>) -> Self {
        Self::new(
            in_channels,
            out_channels,
            vec![0.0; out_channels * in_channels * KERNEL_AREA],
            vec![0.0; out_channels],
            dilation,
            groups.map(|g| GroupNorm::identity(out_channels, g)),
        )
        .expect("zero layer is well formed")
    }

    /// Uniform in `±1/√fan_in` for kernel and bias; identity normalization.
    pub fn seeded<R: Rng>(
        rng: &mut R,
        in_channels: usize,
        out_channels: usize,
        dilation: usize,
        groups: Option<usize>,
    ) -> Self {
        let bound = 1.0 / ((in_channels * KERNEL_AREA) as f64).sqrt();
        let kernel = (0..out_channels * in_channels * KERNEL_AREA)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        let bias = (0..out_channels).map(|_| rng.random_range(-bound..=bound)).collect();
        Self::new(
            in_channels,
            out_channels,
            kernel,
            bias,
            dilation,
            groups.map(|g| GroupNorm::identity(out_channels, g)),
        )
        .expect("seeded layer is well formed")
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn dilation(&self) -> usize {
        self.dilation
    }

    pub fn norm(&self) -> Option<&GroupNorm> {
        self.norm.as_ref()
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    #[inline]
    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.kernel[((o * self.in_channels + i) * 3 + ky) * 3 + kx]
    }

    /// Convolution, then group norm + ReLU when the layer carries a norm.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let out = conv2d(input, self)?;
        match &self.norm {
            Some(gn) => Ok(group_norm_relu(&out, &gn.scale, &gn.shift, gn.groups)),
            None => Ok(out),
        }
    }
}

/// Dilated 3×3 cross-correlation with same-size zero padding.
pub fn conv2d(input: &Tensor, w: &ConvLayerWeights) -> Result<Tensor> {
    if input.channels() != w.in_channels {
        return Err(Error::ChannelMismatch {
            expected: w.in_channels,
            actual: input.channels(),
        });
    }
    let (h, wd) = (input.height(), input.width());
    let mut out = Tensor::zeros(w.out_channels, h, wd);
    let dil = w.dilation as isize;
    for o in 0..w.out_channels {
        let plane = out.channel_mut(o);
        plane.fill(w.bias[o]);
        for i in 0..w.in_channels {
            let src = input.channel(i);
            for ky in 0..3 {
                let dy = (ky as isize - 1) * dil;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..3 {
                    let k = w.weight(o, i, ky, kx);
                    if k == 0.0 {
                        continue;
                    }
                    let dx = (kx as isize - 1) * dil;
                    let (x0, x1) = valid_range(wd, dx);
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let dst_row = &mut plane[y * wd + x0..y * wd + x1];
                        let src_start = (sy * wd) as isize + x0 as isize + dx;
                        let src_row = &src[src_start as usize..src_start as usize + (x1 - x0)];
                        for (d, s) in dst_row.iter_mut().zip(src_row) {
                            *d += k * s;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Output rows `y` for which `y + offset` is inside `0..len`.
#[inline]
fn valid_range(len: usize, offset: isize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (len as isize - offset.max(0)).max(0) as usize;
    (lo.min(len), hi.max(lo.min(len)))
}

/// Group normalization (ε = 1e−5, population variance) with per-channel
/// affine parameters, followed by ReLU.
pub fn group_norm_relu(x: &Tensor, scale: &[f64], shift: &[f64], groups: usize) -> Tensor {
    let c = x.channels();
    assert!(groups > 0 && c % groups == 0, "{groups} groups do not divide {c} channels");
    assert!(scale.len() == c && shift.len() == c);
    let per_group = c / groups;
    let mut out = x.clone();
    for g in 0..groups {
        let chans = g * per_group..(g + 1) * per_group;
        let n = (per_group * x.plane_len()) as f64;
        let mean = chans.clone().map(|ch| x.channel(ch).iter().sum::<f64>()).sum::<f64>() / n;
        let var = chans
            .clone()
            .map(|ch| x.channel(ch).iter().map(|v| (v - mean).powi(2)).sum::<f64>())
            .sum::<f64>()
            / n;
        let inv_std = 1.0 / (var + GROUP_NORM_EPS).sqrt();
        for ch in chans {
            let (s, b) = (scale[ch], shift[ch]);
            for v in out.channel_mut(ch) {
                *v = ((*v - mean) * inv_std * s + b).max(0.0);
            }
        }
    }
    out
}

/// 2×2 stride-2 max pooling. Odd trailing rows/columns pool over the pixels
/// that exist, so the output is `⌈H/2⌉ × ⌈W/2⌉`.
pub fn max_pool2x2(input: &Tensor) -> Tensor {
    let (h, w) = (input.height(), input.width());
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Tensor::zeros(input.channels(), oh, ow);
    for c in 0..input.channels() {
        let src = input.channel(c);
        let dst = out.channel_mut(c);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for y in 2 * oy..(2 * oy + 2).min(h) {
                    for x in 2 * ox..(2 * ox + 2).min(w) {
                        m = m.max(src[y * w + x]);
                    }
                }
                dst[oy * ow + ox] = m;
            }
        }
    }
    out
}

/// 3×3 transposed convolution with stride 2 (padding 1, output padding 1).
#[derive(Debug, Clone, PartialEq)]
pub struct DeconvWeights {
    in_channels: usize,
    out_channels: usize,
    /// `in × out × 3 × 3`, row-major.
    kernel: Vec<f64>,
    bias: Vec<f64>,
}

impl DeconvWeights {
    pub fn new(in_channels: usize, out_channels: usize, kernel: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if kernel.len() != in_channels * out_channels * KERNEL_AREA || bias.len() != out_channels {
            return Err(Error::ShapeMismatch(format!(
                "deconvolution {in_channels}->{out_channels} given {} kernel and {} bias values",
                kernel.len(),
                bias.len()
            )));
        }
        if kernel.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("non-finite deconvolution weights".into()));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            bias,
        })
    }

    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self::new(
            in_channels,
            out_channels,
            vec![0.0; in_channels * out_channels * KERNEL_AREA],
            vec![0.0; out_channels],
        )
        .expect("zero layer is well formed")
    }

    pub fn seeded<R: Rng>(rng: &mut R, in_channels: usize, out_channels: usize) -> Self {
        let bound = 1.0 / ((out_channels * KERNEL_AREA) as f64).sqrt();
        let kernel = (0..in_channels * out_channels * KERNEL_AREA)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        let bias = (0..out_channels).map(|_| rng.random_range(-bound..=bound)).collect();
        Self::new(in_channels, out_channels, kernel, bias).expect("seeded layer is well formed")
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    #[inline]
    pub fn weight(&self, i: usize, o: usize, ky: usize, kx: usize) -> f64 {
        self.kernel[((i * self.out_channels + o) * 3 + ky) * 3 + kx]
    }

    /// Upsamples to `2H × 2W` and crops the result to `out_h × out_w`.
    pub fn forward(&self, input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
        if input.channels() != self.in_channels {
            return Err(Error::ChannelMismatch {
                expected: self.in_channels,
                actual: input.channels(),
            });
        }
        let (h, w) = (input.height(), input.width());
        if out_h > 2 * h || out_w > 2 * w {
            return Err(Error::ShapeMismatch(format!(
                "cannot crop a {}x{} upsampling to {out_h}x{out_w}",
                2 * h,
                2 * w
            )));
        }
        let mut out = Tensor::zeros(self.out_channels, out_h, out_w);
        for o in 0..self.out_channels {
            let dst = out.channel_mut(o);
            dst.fill(self.bias[o]);
            for i in 0..self.in_channels {
                let src = input.channel(i);
                for ky in 0..3 {
                    for kx in 0..3 {
                        let k = self.weight(i, o, ky, kx);
                        if k == 0.0 {
                            continue;
                        }
                        for iy in 0..h {
                            // oy = 2·iy − 1 + ky
                            let oy = 2 * iy + ky;
                            if oy == 0 || oy - 1 >= out_h {
                                continue;
                            }
                            let oy = oy - 1;
                            for ix in 0..w {
                                let ox = 2 * ix + kx;
                                if ox == 0 || ox - 1 >= out_w {
                                    continue;
                                }
                                dst[oy * out_w + ox - 1] += k * src[iy * w + ix];
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}
