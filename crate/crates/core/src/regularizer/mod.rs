//! Sequential regularization of the cost-slice stream into score slices.
//!
//! A [`Regularizer`] consumes one [`CostSlice`] per step in hypothesis order
//! and returns a single-channel [`ScoreSlice`] (higher means a better
//! match). Recurrent implementations keep their state between steps, so
//! memory stays constant however many hypotheses are swept.

pub mod hulstm;
pub mod lstm;

pub use hulstm::{hu_lstm_step, HuLstm, HuLstmWeights, LstmState};
pub use lstm::{conv_lstm_cell, CellState, LstmCellWeights};

use crate::costvol::CostSlice;
use crate::tensor::Tensor;
use crate::Result;

/// Regularized matching score for one depth hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSlice {
    pub index: usize,
    pub depth: f64,
    /// `1 × H × W`.
    pub score: Tensor,
}

impl ScoreSlice {
    pub fn width(&self) -> usize {
        self.score.width()
    }

    pub fn height(&self) -> usize {
        self.score.height()
    }

    pub fn values(&self) -> &[f64] {
        self.score.channel(0)
    }
}

pub trait Regularizer {
    fn step(&mut self, slice: &CostSlice) -> Result<ScoreSlice>;

    /// Forgets any recurrent state before a new sweep.
    fn reset(&mut self);
}

/// Weight-free regularizer: the score is the negated channel-mean cost.
#[derive(Debug, Clone, Copy, Default)]
pub struct Passthrough;

pub fn passthrough_regularizer(slice: &CostSlice) -> ScoreSlice {
    let (h, w) = (slice.height(), slice.width());
    let mut score = Tensor::zeros(1, h, w);
    let out = score.channel_mut(0);
    for c in 0..slice.cost.channels() {
        for (o, v) in out.iter_mut().zip(slice.cost.channel(c)) {
            *o += v;
        }
    }
    let scale = -1.0 / slice.cost.channels() as f64;
    out.iter_mut().for_each(|o| *o *= scale);
    ScoreSlice {
        index: slice.index,
        depth: slice.depth,
        score,
    }
}

impl Regularizer for Passthrough {
    fn step(&mut self, slice: &CostSlice) -> Result<ScoreSlice> {
        Ok(passthrough_regularizer(slice))
    }

    fn reset(&mut self) {}
}

/// Adapter threading a regularizer over a cost-slice stream.
pub struct RegularizedStream<'r, I, R: ?Sized> {
    slices: I,
    regularizer: &'r mut R,
}

/// Resets `regularizer` and maps each incoming slice through it, one at a
/// time. Errors from the source stream are passed through.
pub fn regularize_stream<I, R>(slices: I, regularizer: &mut R) -> RegularizedStream<'_, I::IntoIter, R>
where
    I: IntoIterator<Item = Result<CostSlice>>,
    R: Regularizer + ?Sized,
{
    regularizer.reset();
    RegularizedStream {
        slices: slices.into_iter(),
        regularizer,
    }
}

impl<I, R> Iterator for RegularizedStream<'_, I, R>
where
    I: Iterator<Item = Result<CostSlice>>,
    R: Regularizer + ?Sized,
{
    type Item = Result<ScoreSlice>;

    fn next(&mut self) -> Option<Self::Item> {
        let slice = self.slices.next()?;
        Some(slice.and_then(|s| self.regularizer.step(&s)))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.slices.size_hint()
    }
}
