//! Weight container for the feature network and the regularizer.
//!
//! ```text
//! MVSW 1\n
//! <manifest length in bytes>\n
//! <JSON manifest>
//! <little-endian f32 values>
//! ```
//!
//! The manifest lists layers in storage order:
//! `{"layers": [{"name", "kind": "conv"|"deconv", "in", "out", "dilation", "groups"}]}`.
//! Each conv layer stores its kernel (`out × in × 3 × 3`), its bias and, when
//! `groups` is set, the normalization scale and shift. A deconv layer stores
//! its kernel (`in × out × 3 × 3`) and bias.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_bytes, write_bytes};
use crate::features::drenet::LAYOUT;
use crate::features::DrenetWeights;
use crate::layers::{ConvLayerWeights, DeconvWeights, GroupNorm};
use crate::regularizer::hulstm::{CELL_COUNT, CELL_INPUTS, HIDDEN_CHANNELS};
use crate::regularizer::{HuLstmWeights, LstmCellWeights};
use crate::{Error, Result};

const MAGIC: &str = "MVSW 1";
const GATES: [&str; 4] = ["input", "forget", "output", "candidate"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelWeights {
    pub features: Option<DrenetWeights>,
    pub regularizer: Option<HuLstmWeights>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum LayerKind {
    Conv,
    Deconv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerRecord {
    name: String,
    kind: LayerKind,
    #[serde(rename = "in")]
    in_channels: usize,
    #[serde(rename = "out")]
    out_channels: usize,
    #[serde(default = "one")]
    dilation: usize,
    #[serde(default)]
    groups: Option<usize>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    layers: Vec<LayerRecord>,
}

enum Layer {
    Conv(ConvLayerWeights),
    Deconv(DeconvWeights),
}

fn conv_record(name: String, l: &ConvLayerWeights) -> (LayerRecord, Vec<f64>) {
    let mut data = l.kernel().to_vec();
    data.extend_from_slice(l.bias());
    if let Some(n) = l.norm() {
        data.extend_from_slice(&n.scale);
        data.extend_from_slice(&n.shift);
    }
    let rec = LayerRecord {
        name,
        kind: LayerKind::Conv,
        in_channels: l.in_channels(),
        out_channels: l.out_channels(),
        dilation: l.dilation(),
        groups: l.norm().map(|n| n.groups),
    };
    (rec, data)
}

fn records(w: &ModelWeights) -> Vec<(LayerRecord, Vec<f64>)> {
    let mut out = Vec::new();
    if let Some(f) = &w.features {
        for (name, l) in f.named_layers() {
            out.push(conv_record(format!("features.{name}"), l));
        }
    }
    if let Some(r) = &w.regularizer {
        for (k, cell) in r.cells().iter().enumerate() {
            for (gate, l) in cell.gates() {
                out.push(conv_record(format!("regularizer.cell{k}.{gate}"), l));
            }
        }
        for (k, up) in r.upsample().iter().enumerate() {
            let mut data = up.kernel().to_vec();
            data.extend_from_slice(up.bias());
            out.push((
                LayerRecord {
                    name: format!("regularizer.up{k}"),
                    kind: LayerKind::Deconv,
                    in_channels: up.in_channels(),
                    out_channels: up.out_channels(),
                    dilation: 1,
                    groups: None,
                },
                data,
            ));
        }
        out.push(conv_record("regularizer.head".into(), r.head()));
    }
    out
}

pub fn weights_bytes(w: &ModelWeights) -> Vec<u8> {
    let recs = records(w);
    let manifest = Manifest {
        layers: recs.iter().map(|(r, _)| r.clone()).collect(),
    };
    let json = serde_json::to_string(&manifest).expect("manifest serializes");
    let mut out = format!("{MAGIC}\n{}\n{json}", json.len()).into_bytes();
    for (_, data) in &recs {
        for &v in data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_weights(path: &Path, w: &ModelWeights) -> Result<()> {
    write_bytes(path, &weights_bytes(w))
}

pub fn read_weights(path: &Path) -> Result<ModelWeights> {
    parse_weights(&read_bytes(path)?, path)
}

fn value_count(r: &LayerRecord) -> usize {
    let k = r.in_channels * r.out_channels * 9 + r.out_channels;
    match (r.kind, r.groups) {
        (LayerKind::Conv, Some(_)) => k + 2 * r.out_channels,
        _ => k,
    }
}

pub fn parse_weights(bytes: &[u8], path: &Path) -> Result<ModelWeights> {
    let (lines, rest) =
        super::split_header_lines(bytes, 2).ok_or_else(|| Error::parse(path, 1, "truncated weight header"))?;
    if lines[0] != MAGIC {
        return Err(Error::parse(path, 1, format!("expected {MAGIC:?}, found {:?}", lines[0])));
    }
    let len: usize = lines[1]
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, 2, "bad manifest length"))?;
    if rest.len() < len {
        return Err(Error::parse(path, 3, "manifest is truncated"));
    }
    let manifest: Manifest =
        serde_json::from_slice(&rest[..len]).map_err(|e| Error::parse(path, 3, format!("bad manifest: {e}")))?;
    let data = &rest[len..];
    let total: usize = manifest.layers.iter().map(value_count).sum();
    if data.len() != total * 4 {
        return Err(Error::parse(
            path,
            3,
            format!("manifest describes {total} values, file holds {} bytes", data.len()),
        ));
    }
    let mut values = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64);
    let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };

    let mut layers: BTreeMap<String, Layer> = BTreeMap::new();
    for r in &manifest.layers {
        let kernel = take(r.in_channels * r.out_channels * 9);
        let bias = take(r.out_channels);
        let layer = match r.kind {
            LayerKind::Conv => {
                let norm = r.groups.map(|groups| GroupNorm {
                    groups,
                    scale: take(r.out_channels),
                    shift: take(r.out_channels),
                });
                Layer::Conv(ConvLayerWeights::new(r.in_channels, r.out_channels, kernel, bias, r.dilation, norm)?)
            }
            LayerKind::Deconv => Layer::Deconv(DeconvWeights::new(r.in_channels, r.out_channels, kernel, bias)?),
        };
        if layers.insert(r.name.clone(), layer).is_some() {
            return Err(Error::WeightGraphMismatch(format!("layer {} appears twice", r.name)));
        }
    }
    assemble(layers)
}

fn take_conv(layers: &mut BTreeMap<String, Layer>, name: &str) -> Result<ConvLayerWeights> {
    match layers.remove(name) {
        Some(Layer::Conv(c)) => Ok(c),
        Some(Layer::Deconv(_)) => Err(Error::WeightGraphMismatch(format!("layer {name} must be a convolution"))),
        None => Err(Error::WeightGraphMismatch(format!("missing layer {name}"))),
    }
}

fn assemble(mut layers: BTreeMap<String, Layer>) -> Result<ModelWeights> {
    let mut out = ModelWeights::default();
    if layers.keys().any(|k| k.starts_with("features.")) {
        let convs = LAYOUT
            .iter()
            .map(|(name, ..)| take_conv(&mut layers, &format!("features.{name}")))
            .collect::<Result<Vec<_>>>()?;
        out.features = Some(DrenetWeights::new(convs)?);
    }
    if layers.keys().any(|k| k.starts_with("regularizer.")) {
        let mut cells = Vec::with_capacity(CELL_COUNT);
        for (k, &cin) in CELL_INPUTS.iter().enumerate() {
            let [i, f, o, c] = GATES.map(|g| take_conv(&mut layers, &format!("regularizer.cell{k}.{g}")));
            cells.push(LstmCellWeights::new(cin, HIDDEN_CHANNELS, i?, f?, o?, c?)?);
        }
        let mut upsample = Vec::with_capacity(2);
        for k in 0..2 {
            let name = format!("regularizer.up{k}");
            match layers.remove(&name) {
                Some(Layer::Deconv(d)) => upsample.push(d),
                Some(Layer::Conv(_)) => {
                    return Err(Error::WeightGraphMismatch(format!("layer {name} must be a transposed convolution")))
                }
                None => return Err(Error::WeightGraphMismatch(format!("missing layer {name}"))),
            }
        }
        let head = take_conv(&mut layers, "regularizer.head")?;
        out.regularizer = Some(HuLstmWeights::new(cells, upsample, head)?);
    }
    if let Some(extra) = layers.keys().next() {
        return Err(Error::WeightGraphMismatch(format!("unknown layer {extra}")));
    }
    Ok(out)
}
