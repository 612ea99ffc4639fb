//! Dense multi-view stereo reconstruction.
//!
//! The pipeline turns a set of calibrated images into a point cloud:
//!
//! 1. [`features`] extracts full-resolution 32-channel feature maps, either
//!    with the dilated-convolution extractor or with a weight-free
//!    photometric layout.
//! 2. [`costvol`] sweeps fronto-parallel depth planes through the reference
//!    view and streams one variance-cost slice per hypothesis.
//! 3. [`regularizer`] runs the slice stream through a U-shaped stack of
//!    convolutional LSTM cells (or a passthrough), one slice at a time.
//! 4. [`estimator`] reduces the score stream to a depth map and confidence
//!    with an online softmax, never materializing the probability volume.
//! 5. [`fusion`] filters each depth map by multi-view geometric consistency
//!    and fuses the survivors into a [`fusion::PointCloud`].
//!
//! [`synth`] renders exact synthetic scenes for verification, [`eval`]
//! scores reconstructions against ground truth and [`io`] holds the on-disk
//! formats.

pub mod costvol;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod layers;
pub mod maps;
pub mod pipeline;
pub mod regularizer;
pub mod selfcheck;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
