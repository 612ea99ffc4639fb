//! End-to-end drivers: per-view depth estimation and multi-view fusion.

use crate::costvol::{cost_volume_stream, SweepViews};
use crate::estimator::online_softmax_wta;
use crate::features::FeatureMap;
use crate::fusion::{
    dynamic_filter, fixed_threshold_filter, fuse_point_cloud, probability_filter, FusionParams, PointCloud,
    ViewEstimate,
};
use crate::geometry::{Camera, HypothesisSpace};
use crate::maps::{ConfidenceMap, DepthMap};
use crate::regularizer::{regularize_stream, HuLstm, HuLstmWeights, Passthrough, Regularizer};
use crate::{Error, Result};

/// Regularizer selection for a run; each estimation gets a fresh instance.
#[derive(Debug, Clone)]
pub enum RegularizerChoice {
    Passthrough,
    HuLstm(Box<HuLstmWeights>),
}

impl RegularizerChoice {
    pub fn instantiate(&self) -> Box<dyn Regularizer> {
        match self {
            RegularizerChoice::Passthrough => Box::new(Passthrough),
            RegularizerChoice::HuLstm(w) => Box::new(HuLstm::new((**w).clone())),
        }
    }
}

/// Depth and confidence of view `reference` from precomputed features.
pub fn estimate_view_depth(
    features: &[FeatureMap],
    cameras: &[Camera],
    reference: usize,
    sources: &[usize],
    hypotheses: HypothesisSpace,
    regularizer: &mut dyn Regularizer,
) -> Result<(DepthMap, ConfidenceMap)> {
    if features.len() != cameras.len() {
        return Err(Error::SizeMismatch(format!(
            "{} feature maps for {} cameras",
            features.len(),
            cameras.len()
        )));
    }
    if reference >= features.len() || sources.iter().any(|&s| s >= features.len() || s == reference) {
        return Err(Error::InvalidParameter(format!(
            "reference {reference} with sources {sources:?} among {} views",
            features.len()
        )));
    }
    let src_features: Vec<&FeatureMap> = sources.iter().map(|&s| &features[s]).collect();
    let src_cameras: Vec<&Camera> = sources.iter().map(|&s| &cameras[s]).collect();
    let views = SweepViews {
        reference: &features[reference],
        reference_camera: &cameras[reference],
        sources: &src_features,
        source_cameras: &src_cameras,
    };
    let costs = cost_volume_stream(views, hypotheses)?;
    online_softmax_wta(regularize_stream(costs, regularizer), &hypotheses)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Dynamic,
    Fixed,
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dynamic" => Ok(FilterKind::Dynamic),
            "fixed" => Ok(FilterKind::Fixed),
            other => Err(Error::InvalidParameter(format!("unknown filter {other:?}"))),
        }
    }
}

/// Filters every view against its listed sources.
///
/// Source depths are probability-filtered before they are used for the
/// consistency checks, and both filters drop reference pixels below the
/// confidence threshold, so the two filters differ only in the geometric
/// test.
pub fn filter_views(
    views: &[ViewEstimate],
    pairs: &[Vec<usize>],
    kind: FilterKind,
    params: &FusionParams,
) -> Result<Vec<ViewEstimate>> {
    params.validate()?;
    if pairs.len() != views.len() {
        return Err(Error::SizeMismatch(format!("{} pair entries for {} views", pairs.len(), views.len())));
    }
    let confident: Vec<ViewEstimate> = views.iter().map(|v| probability_filter(v, params.phi)).collect();
    views
        .iter()
        .zip(pairs)
        .enumerate()
        .map(|(i, (view, srcs))| {
            if srcs.iter().any(|&j| j >= views.len() || j == i) {
                return Err(Error::InvalidParameter(format!("view {i} lists invalid sources {srcs:?}")));
            }
            let sources: Vec<&ViewEstimate> = srcs.iter().map(|&j| &confident[j]).collect();
            Ok(match kind {
                FilterKind::Dynamic => dynamic_filter(view, &sources, params),
                FilterKind::Fixed => {
                    fixed_threshold_filter(&confident[i], &sources, params.tau1, params.tau2, params.min_views)
                }
            })
        })
        .collect()
}

/// Filters and fuses all views into one cloud.
pub fn fuse_views(
    views: &[ViewEstimate],
    pairs: &[Vec<usize>],
    kind: FilterKind,
    params: &FusionParams,
) -> Result<PointCloud> {
    let filtered = filter_views(views, pairs, kind, params)?;
    Ok(fuse_point_cloud(&filtered, params.lambda))
}
