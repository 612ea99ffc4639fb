//! Convolutional LSTM cell.
//!
//! With `z = [x, h]` the channel concatenation of the input and previous
//! hidden map:
//!
//! ```text
//! i  = σ(W_i ∗ z + b_i)        f  = σ(W_f ∗ z + b_f)
//! ĉ  = tanh(W_c ∗ z + b_c)     o  = σ(W_o ∗ z + b_o)
//! c′ = f ⊙ c + i ⊙ ĉ           h′ = o ⊙ tanh(c′)
//! ```

use rand::Rng;

use crate::layers::{conv2d, ConvLayerWeights};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Gate convolutions over `[input, hidden]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellWeights {
    pub input_gate: ConvLayerWeights,
    pub forget_gate: ConvLayerWeights,
    pub output_gate: ConvLayerWeights,
    pub candidate: ConvLayerWeights,
    input_channels: usize,
    hidden_channels: usize,
}

impl LstmCellWeights {
    pub fn new(
        input_channels: usize,
        hidden_channels: usize,
        input_gate: ConvLayerWeights,
        forget_gate: ConvLayerWeights,
        output_gate: ConvLayerWeights,
        candidate: ConvLayerWeights,
    ) -> Result<Self> {
        for (name, g) in [
            ("input", &input_gate),
            ("forget", &forget_gate),
            ("output", &output_gate),
            ("candidate", &candidate),
        ] {
            if g.in_channels() != input_channels + hidden_channels
                || g.out_channels() != hidden_channels
                || g.dilation() != 1
                || g.norm().is_some()
            {
                return Err(Error::WeightGraphMismatch(format!(
                    "{name} gate must be a plain {}->{hidden_channels} convolution, got {}->{}",
                    input_channels + hidden_channels,
                    g.in_channels(),
                    g.out_channels()
                )));
            }
        }
        Ok(Self {
            input_gate,
            forget_gate,
            output_gate,
            candidate,
            input_channels,
            hidden_channels,
        })
    }

    pub fn zeros(input_channels: usize, hidden_channels: usize) -> Self {
        let g = || ConvLayerWeights::zeros(input_channels + hidden_channels, hidden_channels, 1, None);
        Self::new(input_channels, hidden_channels, g(), g(), g(), g()).expect("zero cell is well formed")
    }

    pub fn seeded<R: Rng>(rng: &mut R, input_channels: usize, hidden_channels: usize) -> Self {
        let mut g = || ConvLayerWeights::seeded(rng, input_channels + hidden_channels, hidden_channels, 1, None);
        let (i, f, o, c) = (g(), g(), g(), g());
        Self::new(input_channels, hidden_channels, i, f, o, c).expect("seeded cell is well formed")
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn hidden_channels(&self) -> usize {
        self.hidden_channels
    }

    /// Gates in storage order: input, forget, output, candidate.
    pub fn gates(&self) -> [(&'static str, &ConvLayerWeights); 4] {
        [
            ("input", &self.input_gate),
            ("forget", &self.forget_gate),
            ("output", &self.output_gate),
            ("candidate", &self.candidate),
        ]
    }
}

/// Hidden and cell maps of one ConvLSTM cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Tensor,
    pub c: Tensor,
}

impl CellState {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            h: Tensor::zeros(channels, height, width),
            c: Tensor::zeros(channels, height, width),
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One recurrent step. The new hidden map is both the cell output and part
/// of the returned state.
pub fn conv_lstm_cell(x: &Tensor, state: &CellState, w: &LstmCellWeights) -> Result<CellState> {
    if x.channels() != w.input_channels {
        return Err(Error::ShapeMismatch(format!(
            "cell expects {} input channels, got {}",
            w.input_channels,
            x.channels()
        )));
    }
    if !state.h.same_shape(&state.c)
        || state.h.channels() != w.hidden_channels
        || state.h.height() != x.height()
        || state.h.width() != x.width()
    {
        return Err(Error::ShapeMismatch(format!(
            "state {:?}/{:?} does not fit input {}x{} with {} hidden channels",
            state.h,
            state.c,
            x.height(),
            x.width(),
            w.hidden_channels
        )));
    }
    let z = Tensor::concat(&[x, &state.h])?;
    let i = conv2d(&z, &w.input_gate)?;
    let f = conv2d(&z, &w.forget_gate)?;
    let o = conv2d(&z, &w.output_gate)?;
    let mut c = conv2d(&z, &w.candidate)?;
    drop(z);
    let mut h = o;
    for k in 0..c.as_slice().len() {
        let cand = c.as_slice()[k].tanh();
        let cell = sigmoid(f.as_slice()[k]) * state.c.as_slice()[k] + sigmoid(i.as_slice()[k]) * cand;
        c.as_mut_slice()[k] = cell;
        let out = &mut h.as_mut_slice()[k];
        *out = sigmoid(*out) * cell.tanh();
    }
    Ok(CellState { h, c })
}
