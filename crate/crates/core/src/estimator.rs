//! Depth selection from score slices, plus the classification loss used to
//! train the regularizer.
//!
//! At inference the score stream is folded into a running softmax: per pixel
//! we keep the running maximum, the rescaled normalizer, the argmax and the
//! scores of its two neighbors. The full probability volume is never stored.

use crate::geometry::HypothesisSpace;
use crate::maps::{ConfidenceMap, DepthMap};
use crate::regularizer::ScoreSlice;
use crate::{Error, Result};

const LOG_CLAMP: f64 = 1e-12;

/// Streaming winner-take-all with a 3-tap softmax confidence.
///
/// Ties keep the lowest index. The confidence is the probability mass of the
/// argmax bin and its immediate neighbors.
#[derive(Debug, Clone)]
pub struct WtaAccumulator {
    width: usize,
    height: usize,
    seen: usize,
    max: Vec<f64>,
    norm: Vec<f64>,
    best: Vec<usize>,
    left: Vec<f64>,
    right: Vec<f64>,
    prev: Vec<f64>,
}

impl WtaAccumulator {
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            seen: 0,
            max: vec![f64::NEG_INFINITY; n],
            norm: vec![0.0; n],
            best: vec![0; n],
            left: vec![f64::NEG_INFINITY; n],
            right: vec![f64::NEG_INFINITY; n],
            prev: vec![f64::NEG_INFINITY; n],
        }
    }

    pub fn seen(&self) -> usize {
        self.seen
    }

    pub fn push(&mut self, slice: &ScoreSlice) -> Result<()> {
        if slice.width() != self.width || slice.height() != self.height {
            return Err(Error::SizeMismatch(format!(
                "score slice is {}x{}, expected {}x{}",
                slice.width(),
                slice.height(),
                self.width,
                self.height
            )));
        }
        if slice.index != self.seen {
            return Err(Error::StreamLengthMismatch {
                expected: self.seen,
                actual: slice.index,
            });
        }
        let i = self.seen;
        for (px, &s) in slice.values().iter().enumerate() {
            let m = self.max[px];
            if s > m {
                self.norm[px] = if m == f64::NEG_INFINITY {
                    1.0
                } else {
                    self.norm[px] * (m - s).exp() + 1.0
                };
                self.max[px] = s;
                self.best[px] = i;
                self.left[px] = self.prev[px];
                self.right[px] = f64::NEG_INFINITY;
            } else {
                self.norm[px] += (s - m).exp();
                if i == self.best[px] + 1 {
                    self.right[px] = s;
                }
            }
            self.prev[px] = s;
        }
        self.seen += 1;
        Ok(())
    }

    /// Probability mass of the argmax bin and its neighbors at pixel `px`.
    pub fn confidence(&self, px: usize) -> f64 {
        let m = self.max[px];
        let mass = 1.0 + (self.left[px] - m).exp() + (self.right[px] - m).exp();
        (mass / self.norm[px]).clamp(0.0, 1.0)
    }

    pub fn argmax(&self) -> &[usize] {
        &self.best
    }

    pub fn finish(self, hypotheses: &HypothesisSpace) -> Result<(DepthMap, ConfidenceMap)> {
        if self.seen != hypotheses.count() {
            return Err(Error::StreamLengthMismatch {
                expected: hypotheses.count(),
                actual: self.seen,
            });
        }
        let conf: Vec<f64> = (0..self.best.len()).map(|px| self.confidence(px)).collect();
        let depth: Vec<f64> = self.best.iter().map(|&k| hypotheses.depth(k)).collect();
        let valid = vec![true; depth.len()];
        Ok((
            DepthMap::new(self.width, self.height, depth, valid)?,
            ConfidenceMap::new(self.width, self.height, conf)?,
        ))
    }
}

/// Consumes exactly `hypotheses.count()` score slices in order.
pub fn online_softmax_wta<I>(stream: I, hypotheses: &HypothesisSpace) -> Result<(DepthMap, ConfidenceMap)>
where
    I: IntoIterator<Item = Result<ScoreSlice>>,
{
    let mut acc: Option<WtaAccumulator> = None;
    for slice in stream {
        let slice = slice?;
        if slice.index >= hypotheses.count() {
            return Err(Error::StreamLengthMismatch {
                expected: hypotheses.count(),
                actual: slice.index + 1,
            });
        }
        acc.get_or_insert_with(|| WtaAccumulator::new(slice.width(), slice.height()))
            .push(&slice)?;
    }
    match acc {
        Some(acc) => acc.finish(hypotheses),
        None => Err(Error::StreamLengthMismatch {
            expected: hypotheses.count(),
            actual: 0,
        }),
    }
}

/// Dense `D × H × W` probabilities, for small instances only.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume {
    depth_count: usize,
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ProbabilityVolume {
    pub fn new(depth_count: usize, width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != depth_count * width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} probabilities for a {depth_count}x{height}x{width} volume",
                values.len()
            )));
        }
        Ok(Self {
            depth_count,
            width,
            height,
            values,
        })
    }

    pub fn depth_count(&self) -> usize {
        self.depth_count
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, k: usize, px: usize) -> f64 {
        self.values[k * self.width * self.height + px]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Dense scores, `D × H × W` with the depth axis outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVolume {
    pub depth_count: usize,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ScoreVolume {
    pub fn new(depth_count: usize, width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != depth_count * width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} scores for a {depth_count}x{height}x{width} volume",
                values.len()
            )));
        }
        Ok(Self {
            depth_count,
            width,
            height,
            values,
        })
    }

    fn pixels(&self) -> usize {
        self.width * self.height
    }
}

/// Max-subtracted softmax along the depth axis.
pub fn softmax_volume(scores: &ScoreVolume) -> ProbabilityVolume {
    let n = scores.pixels();
    let d = scores.depth_count;
    let mut out = vec![0.0; scores.values.len()];
    for px in 0..n {
        let m = (0..d).map(|k| scores.values[k * n + px]).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for k in 0..d {
            let e = (scores.values[k * n + px] - m).exp();
            out[k * n + px] = e;
            sum += e;
        }
        for k in 0..d {
            out[k * n + px] /= sum;
        }
    }
    ProbabilityVolume {
        depth_count: d,
        width: scores.width,
        height: scores.height,
        values: out,
    }
}

/// Nearest hypothesis to `depth`, measured in the space the hypotheses are
/// uniform in. Depths more than half a bin outside the range have no bin.
pub fn one_hot_index(depth: f64, hypotheses: &HypothesisSpace) -> Option<usize> {
    if !(depth > 0.0) || !depth.is_finite() {
        return None;
    }
    let t = hypotheses.continuous_index(depth);
    let last = (hypotheses.count() - 1) as f64;
    if t < -0.5 || t > last + 0.5 {
        return None;
    }
    Some(t.round().clamp(0.0, last) as usize)
}

fn check_gt(width: usize, height: usize, depth_count: usize, gt: &DepthMap, hypotheses: &HypothesisSpace) -> Result<()> {
    if gt.width() != width || gt.height() != height || hypotheses.count() != depth_count {
        return Err(Error::ShapeMismatch(format!(
            "volume {depth_count}x{height}x{width} vs ground truth {}x{} with {} hypotheses",
            gt.height(),
            gt.width(),
            hypotheses.count()
        )));
    }
    Ok(())
}

/// Summed cross entropy over valid ground-truth pixels with a one-hot target.
pub fn cross_entropy_loss(prob: &ProbabilityVolume, gt: &DepthMap, hypotheses: &HypothesisSpace) -> Result<f64> {
    check_gt(prob.width, prob.height, prob.depth_count, gt, hypotheses)?;
    let mut loss = 0.0;
    let mut any = false;
    for (px, (&d, &ok)) in gt.depths().iter().zip(gt.mask()).enumerate() {
        let Some(k) = ok.then(|| one_hot_index(d, hypotheses)).flatten() else {
            continue;
        };
        any = true;
        loss -= prob.get(k, px).max(LOG_CLAMP).ln();
    }
    if any {
        Ok(loss)
    } else {
        Err(Error::EmptyValidSet)
    }
}

/// Gradient of `cross_entropy_loss(softmax(scores))` with respect to the
/// scores: `p − onehot` at valid pixels, zero elsewhere.
pub fn loss_gradient_logits(scores: &ScoreVolume, gt: &DepthMap, hypotheses: &HypothesisSpace) -> Result<ScoreVolume> {
    check_gt(scores.width, scores.height, scores.depth_count, gt, hypotheses)?;
    let prob = softmax_volume(scores);
    let n = scores.pixels();
    let mut grad = vec![0.0; scores.values.len()];
    for (px, (&d, &ok)) in gt.depths().iter().zip(gt.mask()).enumerate() {
        let Some(target) = ok.then(|| one_hot_index(d, hypotheses)).flatten() else {
            continue;
        };
        for k in 0..scores.depth_count {
            grad[k * n + px] = prob.get(k, px) - if k == target { 1.0 } else { 0.0 };
        }
    }
    ScoreVolume::new(scores.depth_count, scores.width, scores.height, grad)
}
