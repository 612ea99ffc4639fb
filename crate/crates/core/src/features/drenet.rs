//! Dense receptive-expansion feature network.
//!
//! Two plain 3×3 layers and a dilation-2 layer lift the image to 32
//! channels, then three parallel branches (plain, dilation 3, dilation 4)
//! are concatenated and fused back to 32 channels. Every layer is a
//! convolution followed by group normalization and ReLU, and nothing is
//! strided, so the output keeps the input resolution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FeatureMap, FEATURE_CHANNELS};
use crate::layers::ConvLayerWeights;
use crate::maps::ImageBuffer;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Channels per normalization group.
pub const GROUP_SIZE: usize = 8;

/// `(name, in, out, dilation)` for every layer, in storage order.
pub const LAYOUT: [(&str, usize, usize, usize); 9] = [
    ("stem.0", 3, 16, 1),
    ("stem.1", 16, 16, 1),
    ("stem.2", 16, 32, 2),
    ("branch_plain", 32, 32, 1),
    ("branch_d3.0", 32, 32, 3),
    ("branch_d3.1", 32, 32, 1),
    ("branch_d4.0", 32, 32, 4),
    ("branch_d4.1", 32, 32, 1),
    ("fuse", 96, FEATURE_CHANNELS, 1),
];

#[derive(Debug, Clone, PartialEq)]
pub struct DrenetWeights {
    layers: Vec<ConvLayerWeights>,
}

impl DrenetWeights {
    /// Validates `layers` against [`LAYOUT`].
    pub fn new(layers: Vec<ConvLayerWeights>) -> Result<Self> {
        if layers.len() != LAYOUT.len() {
            return Err(Error::WeightGraphMismatch(format!(
                "feature network needs {} layers, got {}",
                LAYOUT.len(),
                layers.len()
            )));
        }
        for (layer, (name, cin, cout, dil)) in layers.iter().zip(LAYOUT) {
            if layer.in_channels() != cin || layer.out_channels() != cout || layer.dilation() != dil {
                return Err(Error::WeightGraphMismatch(format!(
                    "layer {name}: expected {cin}->{cout} dilation {dil}, got {}->{} dilation {}",
                    layer.in_channels(),
                    layer.out_channels(),
                    layer.dilation()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn zeros() -> Self {
        Self {
            layers: LAYOUT
                .iter()
                .map(|&(_, cin, cout, dil)| ConvLayerWeights::zeros(cin, cout, dil, Some(cout / GROUP_SIZE)))
                .collect(),
        }
    }

    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            layers: LAYOUT
                .iter()
                .map(|&(_, cin, cout, dil)| {
                    ConvLayerWeights::seeded(&mut rng, cin, cout, dil, Some(cout / GROUP_SIZE))
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[ConvLayerWeights] {
        &self.layers
    }

    pub fn named_layers(&self) -> impl Iterator<Item = (&'static str, &ConvLayerWeights)> {
        LAYOUT.iter().map(|l| l.0).zip(&self.layers)
    }

    /// Replaces layers by a transformation, keeping the layout checked.
    pub fn map_layers(&self, f: impl Fn(&ConvLayerWeights) -> ConvLayerWeights) -> Result<Self> {
        Self::new(self.layers.iter().map(f).collect())
    }
}

fn image_tensor(img: &ImageBuffer) -> Tensor {
    Tensor::from_fn(3, img.height(), img.width(), |c, y, x| {
        if img.channels() == 1 {
            img.get(x, y, 0)
        } else {
            img.get(x, y, c)
        }
    })
}

pub fn drenet_forward(img: &ImageBuffer, weights: &DrenetWeights) -> Result<FeatureMap> {
    let [stem0, stem1, stem2, plain, d3a, d3b, d4a, d4b, fuse] = match weights.layers.as_slice() {
        [a, b, c, d, e, f, g, h, i] => [a, b, c, d, e, f, g, h, i],
        _ => unreachable!("layer count checked at construction"),
    };
    let x = image_tensor(img);
    let x = stem0.forward(&x)?;
    let x = stem1.forward(&x)?;
    let trunk = stem2.forward(&x)?;
    let a = plain.forward(&trunk)?;
    let b = d3b.forward(&d3a.forward(&trunk)?)?;
    let c = d4b.forward(&d4a.forward(&trunk)?)?;
    drop(trunk);
    let cat = Tensor::concat(&[&a, &b, &c])?;
    FeatureMap::new(fuse.forward(&cat)?)
}
