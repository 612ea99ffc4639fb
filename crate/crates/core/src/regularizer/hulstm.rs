//! U-shaped stack of five ConvLSTM cells.
//!
//! ```text
//! cost ─► cell0 ──────────────────────────────────┐ (full)
//!           └─ pool ─► cell1 ─────────────┐ (½)   │
//!                        └─ pool ─► cell2 ─┤ (¼)   │
//!                                   up ◄──┘       │
//!                        [cell1, up] ─► cell3 (½) │
//!                                         up ◄───┤
//!                               [cell0, up] ─► cell4 (full) ─► conv ─► score
//! ```
//!
//! Pooling is 2×2 max with ceiling division, upsampling is a stride-2
//! transposed convolution cropped to the skip connection's size, so any
//! input size round-trips to the same output size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lstm::{conv_lstm_cell, CellState, LstmCellWeights};
use super::{Regularizer, ScoreSlice};
use crate::costvol::CostSlice;
use crate::features::FEATURE_CHANNELS;
use crate::layers::{conv2d, max_pool2x2, ConvLayerWeights, DeconvWeights};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const HIDDEN_CHANNELS: usize = 32;
pub const CELL_COUNT: usize = 5;
/// Input channels of each cell; the two decoder cells see a skip connection
/// concatenated with an upsampled map.
pub const CELL_INPUTS: [usize; CELL_COUNT] = [
    FEATURE_CHANNELS,
    HIDDEN_CHANNELS,
    HIDDEN_CHANNELS,
    2 * HIDDEN_CHANNELS,
    2 * HIDDEN_CHANNELS,
];

#[derive(Debug, Clone, PartialEq)]
pub struct HuLstmWeights {
    cells: Vec<LstmCellWeights>,
    upsample: Vec<DeconvWeights>,
    head: ConvLayerWeights,
}

impl HuLstmWeights {
    pub fn new(cells: Vec<LstmCellWeights>, upsample: Vec<DeconvWeights>, head: ConvLayerWeights) -> Result<Self> {
        if cells.len() != CELL_COUNT || upsample.len() != 2 {
            return Err(Error::WeightGraphMismatch(format!(
                "regularizer needs {CELL_COUNT} cells and 2 upsampling layers, got {} and {}",
                cells.len(),
                upsample.len()
            )));
        }
        for (k, (cell, &cin)) in cells.iter().zip(&CELL_INPUTS).enumerate() {
            if cell.input_channels() != cin || cell.hidden_channels() != HIDDEN_CHANNELS {
                return Err(Error::WeightGraphMismatch(format!(
                    "cell {k}: expected {cin} inputs and {HIDDEN_CHANNELS} hidden channels, got {} and {}",
                    cell.input_channels(),
                    cell.hidden_channels()
                )));
            }
        }
        for (k, up) in upsample.iter().enumerate() {
            if up.in_channels() != HIDDEN_CHANNELS || up.out_channels() != HIDDEN_CHANNELS {
                return Err(Error::WeightGraphMismatch(format!(
                    "upsampling {k} must map {HIDDEN_CHANNELS}->{HIDDEN_CHANNELS} channels"
                )));
            }
        }
        if head.in_channels() != HIDDEN_CHANNELS || head.out_channels() != 1 || head.norm().is_some() || head.dilation() != 1 {
            return Err(Error::WeightGraphMismatch(format!(
                "score head must be a plain {HIDDEN_CHANNELS}->1 convolution"
            )));
        }
        Ok(Self { cells, upsample, head })
    }

    pub fn zeros() -> Self {
        Self {
            cells: CELL_INPUTS.iter().map(|&c| LstmCellWeights::zeros(c, HIDDEN_CHANNELS)).collect(),
            upsample: (0..2).map(|_| DeconvWeights::zeros(HIDDEN_CHANNELS, HIDDEN_CHANNELS)).collect(),
            head: ConvLayerWeights::zeros(HIDDEN_CHANNELS, 1, 1, None),
        }
    }

    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = CELL_INPUTS
            .iter()
            .map(|&c| LstmCellWeights::seeded(&mut rng, c, HIDDEN_CHANNELS))
            .collect();
        let upsample = (0..2)
            .map(|_| DeconvWeights::seeded(&mut rng, HIDDEN_CHANNELS, HIDDEN_CHANNELS))
            .collect();
        let head = ConvLayerWeights::seeded(&mut rng, HIDDEN_CHANNELS, 1, 1, None);
        Self { cells, upsample, head }
    }

    pub fn cells(&self) -> &[LstmCellWeights] {
        &self.cells
    }

    pub fn upsample(&self) -> &[DeconvWeights] {
        &self.upsample
    }

    pub fn head(&self) -> &ConvLayerWeights {
        &self.head
    }
}

/// Recurrent state of all five cells.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    cells: Vec<CellState>,
}

impl LstmState {
    /// Zero state for a `width × height` sweep: cells at scales
    /// 1, ½, ¼, ½, 1.
    pub fn zeros(width: usize, height: usize) -> Self {
        let (h1, w1) = (height.div_ceil(2), width.div_ceil(2));
        let (h2, w2) = (h1.div_ceil(2), w1.div_ceil(2));
        let sizes = [(height, width), (h1, w1), (h2, w2), (h1, w1), (height, width)];
        Self {
            cells: sizes
                .iter()
                .map(|&(h, w)| CellState::zeros(HIDDEN_CHANNELS, h, w))
                .collect(),
        }
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn is_finite(&self) -> bool {
        self.cells.iter().all(|c| c.h.is_finite() && c.c.is_finite())
    }

    pub fn max_abs_hidden(&self) -> f64 {
        self.cells.iter().map(|c| c.h.max_abs()).fold(0.0, f64::max)
    }
}

pub fn hu_lstm_step(slice: &CostSlice, states: &LstmState, weights: &HuLstmWeights) -> Result<(ScoreSlice, LstmState)> {
    if slice.cost.channels() != CELL_INPUTS[0] {
        return Err(Error::WeightGraphMismatch(format!(
            "cost slice has {} channels, regularizer expects {}",
            slice.cost.channels(),
            CELL_INPUTS[0]
        )));
    }
    let [w0, w1, w2, w3, w4] = match weights.cells.as_slice() {
        [a, b, c, d, e] => [a, b, c, d, e],
        _ => unreachable!("cell count checked at construction"),
    };
    let st = &states.cells;
    let (h, w) = (slice.height(), slice.width());

    let s0 = conv_lstm_cell(&slice.cost, &st[0], w0)?;
    let s1 = conv_lstm_cell(&max_pool2x2(&s0.h), &st[1], w1)?;
    let s2 = conv_lstm_cell(&max_pool2x2(&s1.h), &st[2], w2)?;

    let up2 = weights.upsample[0].forward(&s2.h, s1.h.height(), s1.h.width())?;
    let s3 = conv_lstm_cell(&Tensor::concat(&[&s1.h, &up2])?, &st[3], w3)?;
    drop(up2);

    let up3 = weights.upsample[1].forward(&s3.h, h, w)?;
    let s4 = conv_lstm_cell(&Tensor::concat(&[&s0.h, &up3])?, &st[4], w4)?;
    drop(up3);

    let score = conv2d(&s4.h, &weights.head)?;
    Ok((
        ScoreSlice {
            index: slice.index,
            depth: slice.depth,
            score,
        },
        LstmState {
            cells: vec![s0, s1, s2, s3, s4],
        },
    ))
}

/// Stateful regularizer owning its weights and the current recurrent state.
#[derive(Debug, Clone)]
pub struct HuLstm {
    weights: HuLstmWeights,
    state: Option<LstmState>,
}

impl HuLstm {
    pub fn new(weights: HuLstmWeights) -> Self {
        Self { weights, state: None }
    }

    pub fn weights(&self) -> &HuLstmWeights {
        &self.weights
    }

    pub fn state(&self) -> Option<&LstmState> {
        self.state.as_ref()
    }
}

impl Regularizer for HuLstm {
    fn step(&mut self, slice: &CostSlice) -> Result<ScoreSlice> {
        let prev = match self.state.take() {
            Some(s) if s.cells[0].h.height() == slice.height() && s.cells[0].h.width() == slice.width() => s,
            _ => LstmState::zeros(slice.width(), slice.height()),
        };
        let (score, next) = hu_lstm_step(slice, &prev, &self.weights)?;
        drop(prev);
        self.state = Some(next);
        Ok(score)
    }

    fn reset(&mut self) {
        self.state = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularizer::regularize_stream;
    use rand::{Rng, SeedableRng};

    fn random_slice(rng: &mut ChaCha8Rng, index: usize, w: usize, h: usize) -> CostSlice {
        CostSlice {
            index,
            depth: 1.0 + index as f64,
            cost: Tensor::from_fn(FEATURE_CHANNELS, h, w, |_, _, _| rng.random_range(0.0..2.0)),
            views: vec![3; w * h],
        }
    }

    #[test]
    fn output_matches_input_size() {
        let weights = HuLstmWeights::seeded(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (w, h) in [(64, 48), (100, 76), (9, 7)] {
            let slice = random_slice(&mut rng, 0, w, h);
            let (score, state) = hu_lstm_step(&slice, &LstmState::zeros(w, h), &weights).unwrap();
            assert_eq!((score.width(), score.height()), (w, h));
            assert_eq!(score.score.channels(), 1);
            assert!(state.is_finite());
        }
    }

    #[test]
    fn zero_weights_give_zero_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut reg = HuLstm::new(HuLstmWeights::zeros());
        for i in 0..3 {
            let s = reg.step(&random_slice(&mut rng, i, 10, 8)).unwrap();
            assert!(s.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn recurrence_depends_on_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_slice(&mut rng, 0, 8, 6);
        let b = random_slice(&mut rng, 1, 8, 6);
        let mut reg = HuLstm::new(HuLstmWeights::seeded(5));
        let ab: Vec<_> = regularize_stream([Ok(a.clone()), Ok(b.clone())], &mut reg).map(|s| s.unwrap()).collect();
        let ba: Vec<_> = regularize_stream([Ok(b.clone()), Ok(a.clone())], &mut reg).map(|s| s.unwrap()).collect();
        // Same input `b`, once after `a` and once from the zero state.
        let diff = ab[1].values().iter().zip(ba[0].values()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff > 1e-6, "step output ignored its history");
        assert_ne!(ab[0], ba[1]);
    }

    #[test]
    fn single_step_stream_equals_one_step_from_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let slice = random_slice(&mut rng, 0, 7, 5);
        let weights = HuLstmWeights::seeded(7);
        let (direct, _) = hu_lstm_step(&slice, &LstmState::zeros(7, 5), &weights).unwrap();
        let mut reg = HuLstm::new(weights);
        let streamed: Vec<_> = regularize_stream([Ok(slice)], &mut reg).map(|s| s.unwrap()).collect();
        assert_eq!(streamed.len(), 1);
        assert_eq!(streamed[0], direct);
    }

    #[test]
    fn repeat_runs_are_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let slices: Vec<_> = (0..4).map(|i| random_slice(&mut rng, i, 6, 6)).collect();
        let mut reg = HuLstm::new(HuLstmWeights::seeded(9));
        let run = |reg: &mut HuLstm| -> Vec<ScoreSlice> {
            regularize_stream(slices.iter().cloned().map(Ok), reg).map(|s| s.unwrap()).collect()
        };
        assert_eq!(run(&mut reg), run(&mut reg));
    }

    #[test]
    fn graph_mismatch_is_rejected() {
        let w = HuLstmWeights::zeros();
        let mut cells = w.cells().to_vec();
        cells[3] = LstmCellWeights::zeros(HIDDEN_CHANNELS, HIDDEN_CHANNELS);
        assert!(matches!(
            HuLstmWeights::new(cells, w.upsample().to_vec(), w.head().clone()),
            Err(Error::WeightGraphMismatch(_))
        ));
        let bad_slice = CostSlice {
            index: 0,
            depth: 1.0,
            cost: Tensor::zeros(16, 4, 4),
            views: vec![1; 16],
        };
        assert!(hu_lstm_step(&bad_slice, &LstmState::zeros(4, 4), &w).is_err());
    }
}
