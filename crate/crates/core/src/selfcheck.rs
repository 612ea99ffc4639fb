//! Quick built-in checks run by `mvs check`.
//!
//! Each check recomputes a known value or invariant at small size. The full
//! versions live in the test suites.

use std::path::Path;

use nalgebra::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::costvol::CostSlice;
use crate::estimator::{
    cross_entropy_loss, online_softmax_wta, softmax_volume, ProbabilityVolume, ScoreVolume,
};
use crate::features::FEATURE_CHANNELS;
use crate::fusion::{consistency_from_errors, dynamic_consistency_map, ViewEstimate};
use crate::geometry::{reproject, reprojection_errors, DepthSampling, HypothesisSpace};
use crate::io::{format_cam, parse_cam, parse_pfm, pfm_bytes, CamFile, FloatMap};
use crate::maps::{ConfidenceMap, DepthMap};
use crate::regularizer::{conv_lstm_cell, regularize_stream, CellState, HuLstm, HuLstmWeights, LstmCellWeights, ScoreSlice};
use crate::synth::{is_visible, Dataset, SceneKind};
use crate::tensor::{self, Tensor};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn() -> Result<(bool, String)>;

const CHECKS: [(&str, Check); 7] = [
    ("geometry-round-trip", geometry_round_trip),
    ("consistency-values", consistency_values),
    ("conv-lstm-gates", conv_lstm_gates),
    ("streaming-softmax", streaming_softmax),
    ("recurrent-memory", recurrent_memory),
    ("uniform-loss", uniform_loss),
    ("format-round-trips", format_round_trips),
];

/// Runs every check; a check that errors counts as failed.
pub fn run_all() -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|&(name, check)| match check() {
            Ok((passed, detail)) => CheckOutcome { name, passed, detail },
            Err(e) => CheckOutcome {
                name,
                passed: false,
                detail: format!("error: {e}"),
            },
        })
        .collect()
}

fn geometry_round_trip() -> Result<(bool, String)> {
    let data = Dataset::preset(SceneKind::Sphere, 4, 32, 24, 1)?;
    let (mut worst_p, mut worst_d, mut pairs) = (0.0f64, 0.0f64, 0usize);
    for i in 0..4 {
        let j = (i + 1) % 4;
        let src = data.analytic_depth(j);
        for (k, (&d, &m)) in data.views[i].depth.depths().iter().zip(data.views[i].depth.mask()).enumerate() {
            if !m {
                continue;
            }
            let p = Point2::new((k % 32) as f64, (k / 32) as f64);
            let x = crate::geometry::back_project(&data.cameras[i], &p, d);
            if !is_visible(&data.scene.surface, &data.cameras[j], 32, 24, &x) {
                continue;
            }
            if let Ok(r) = reproject(&data.cameras[i], &data.cameras[j], &p, d, &src) {
                let (xp, xd) = reprojection_errors(&p, &r.pixel, d, r.depth);
                worst_p = worst_p.max(xp);
                worst_d = worst_d.max(xd);
                pairs += 1;
            }
        }
    }
    Ok((
        pairs > 0 && worst_p < 1e-5 && worst_d < 1e-7,
        format!("{pairs} co-visible pixels, max pixel error {worst_p:.2e}, max depth error {worst_d:.2e}"),
    ))
}

fn consistency_values() -> Result<(bool, String)> {
    let c = consistency_from_errors(1.0, 0.01, 200.0);
    let data = Dataset::preset(SceneKind::Plane, 7, 16, 12, 2)?;
    let view = |i: usize| {
        ViewEstimate::new(
            data.cameras[i].clone(),
            data.views[i].depth.clone(),
            ConfidenceMap::filled(16, 12, 1.0),
            None,
        )
    };
    // Ground truth against itself through six copies of the same camera.
    let reference = view(0)?;
    let sources: Vec<&ViewEstimate> = vec![&reference; 6];
    let geo = dynamic_consistency_map(&reference, &sources, 200.0);
    let max_dev = geo.iter().map(|g| (g - 6.0).abs()).fold(0.0, f64::max);
    Ok((
        (c - (-3.0f64).exp()).abs() < 1e-9 && max_dev < 1e-9,
        format!("c(1, 0.01) = {c:.12}, six perfect sources deviate by {max_dev:.1e}"),
    ))
}

fn conv_lstm_gates() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = LstmCellWeights::seeded(&mut rng, 4, 3);
    let mut state = CellState::zeros(3, 5, 5);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let x = Tensor::from_fn(4, 5, 5, |_, _, _| rng.random_range(-3.0..3.0));
        let prev = state.c.max_abs();
        state = conv_lstm_cell(&x, &state, &w)?;
        worst = worst.max(state.h.max_abs());
        // |c_t| ≤ |c_{t-1}| + 1 because both gates lie in (0, 1).
        if state.c.max_abs() > prev + 1.0 {
            return Ok((false, "cell state grew faster than the gate bound".into()));
        }
    }
    Ok((worst < 1.0, format!("max |hidden| {worst:.4} over 20 steps")))
}

fn seeded_scores(seed: u64, depth_count: usize, w: usize, h: usize) -> ScoreVolume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..depth_count * w * h).map(|_| rng.random_range(-6.0..6.0)).collect();
    ScoreVolume::new(depth_count, w, h, values).expect("sizes agree")
}

fn streaming_softmax() -> Result<(bool, String)> {
    let (d, w, h) = (32, 6, 5);
    let vol = seeded_scores(4, d, w, h);
    let hyp = HypothesisSpace::new(1.0, 2.0, d, DepthSampling::Uniform)?;
    let prob: ProbabilityVolume = softmax_volume(&vol);
    let stream = (0..d).map(|k| {
        let score = Tensor::from_vec(1, h, w, vol.values[k * w * h..(k + 1) * w * h].to_vec())?;
        Ok(ScoreSlice {
            index: k,
            depth: hyp.depth(k),
            score,
        })
    });
    let (depth, conf) = online_softmax_wta(stream, &hyp)?;
    let mut worst = 0.0f64;
    let mut same = true;
    for px in 0..w * h {
        let best = (0..d).fold(0, |b, k| if prob.get(k, px) > prob.get(b, px) { k } else { b });
        same &= depth.depths()[px] == hyp.depth(best);
        let lo = best.saturating_sub(1);
        let hi = (best + 1).min(d - 1);
        let three: f64 = (lo..=hi).map(|k| prob.get(k, px)).sum();
        worst = worst.max((three - conf.values()[px]).abs());
    }
    Ok((same && worst < 1e-6, format!("argmax identical: {same}, confidence diff {worst:.1e}")))
}

fn peak_for(depth_count: usize) -> Result<usize> {
    let (w, h) = (8, 8);
    let mut reg = HuLstm::new(HuLstmWeights::seeded(5));
    let slices = (0..depth_count).map(move |k| {
        Ok(CostSlice {
            index: k,
            depth: 1.0 + k as f64,
            cost: Tensor::from_fn(FEATURE_CHANNELS, h, w, |c, y, x| ((c + y + x + k) % 5) as f64 * 0.1),
            views: vec![2; w * h],
        })
    });
    tensor::reset_peak();
    let base = tensor::stats().live_tensors;
    for s in regularize_stream(slices, &mut reg) {
        s?;
    }
    Ok(tensor::stats().peak_tensors - base)
}

fn recurrent_memory() -> Result<(bool, String)> {
    let short = peak_for(4)?;
    let long = peak_for(16)?;
    Ok((short == long, format!("peak live tensors {short} for 4 slices, {long} for 16")))
}

fn uniform_loss() -> Result<(bool, String)> {
    let prob = ProbabilityVolume::new(4, 2, 2, vec![0.25; 16])?;
    let hyp = HypothesisSpace::new(1.0, 4.0, 4, DepthSampling::Uniform)?;
    // The loss is a sum over pixels, so a single valid pixel gives ln 4.
    let gt = DepthMap::new(2, 2, vec![2.0; 4], vec![false, true, false, false])?;
    let loss = cross_entropy_loss(&prob, &gt, &hyp)?;
    Ok(((loss - 4f64.ln()).abs() < 1e-9, format!("loss {loss:.12}")))
}

fn format_round_trips() -> Result<(bool, String)> {
    let path = Path::new("<memory>");
    let data = Dataset::preset(SceneKind::Sphere, 3, 12, 9, 6)?;
    let mut ok = true;
    for cam in &data.cameras {
        let file = CamFile {
            camera: cam.clone(),
            depth_min: 0.5,
            depth_interval: 0.01,
            depth_count: Some((64, 1.13)),
        };
        ok &= parse_cam(&format_cam(&file), path)? == file;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let map = FloatMap {
        width: 7,
        height: 5,
        data: (0..35)
            .map(|i| if i % 6 == 0 { f32::NAN } else { rng.random_range(-1e3f32..1e3) })
            .collect(),
    };
    ok &= parse_pfm(&pfm_bytes(&map), path)?.bit_eq(&map);
    Ok((ok, "camera text and float maps".into()))
}
