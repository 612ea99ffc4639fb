//! Point-cloud evaluation: truncated mean accuracy and completeness, and
//! precision / recall / f-score at a distance threshold.

mod kdtree;

pub use kdtree::KdTree;

use std::fmt;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::fusion::PointCloud;
use crate::{Error, Result};

/// Default truncation of accuracy / completeness distances, as a multiple
/// of the f-score threshold.
pub const DEFAULT_TRUNCATION_FACTOR: f64 = 20.0;

/// Distance from every point of `a` to its nearest neighbor in `b`.
pub fn nearest_distance(a: &PointCloud, b: &PointCloud) -> Result<Vec<f64>> {
    if b.is_empty() {
        return Err(Error::EmptyReference);
    }
    let tree = KdTree::new(&b.points);
    Ok(a.points
        .iter()
        .map(|p| tree.nearest(p).expect("reference is non-empty").1.sqrt())
        .collect())
}

/// Same as [`nearest_distance`] by exhaustive search.
pub fn nearest_distance_brute_force(a: &PointCloud, b: &PointCloud) -> Result<Vec<f64>> {
    if b.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(a.points
        .iter()
        .map(|p| {
            b.points
                .iter()
                .map(|q: &Point3<f64>| (q - p).norm_squared())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect())
}

fn both_distances(recon: &PointCloud, gt: &PointCloud) -> Result<(Vec<f64>, Vec<f64>)> {
    if recon.is_empty() || gt.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok((nearest_distance(recon, gt)?, nearest_distance(gt, recon)?))
}

fn truncated_mean(d: &[f64], max_dist: f64) -> f64 {
    d.iter().map(|v| v.min(max_dist)).sum::<f64>() / d.len() as f64
}

fn within(d: &[f64], threshold: f64) -> f64 {
    d.iter().filter(|&&v| v <= threshold).count() as f64 / d.len() as f64
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// `(accuracy, completeness, overall)` with distances truncated at
/// `max_dist`.
pub fn accuracy_completeness(recon: &PointCloud, gt: &PointCloud, max_dist: f64) -> Result<(f64, f64, f64)> {
    let (to_gt, to_recon) = both_distances(recon, gt)?;
    let acc = truncated_mean(&to_gt, max_dist);
    let comp = truncated_mean(&to_recon, max_dist);
    Ok((acc, comp, 0.5 * (acc + comp)))
}

/// `(precision, recall, f)`; a point counts when its distance is at most
/// `threshold`.
pub fn fscore(recon: &PointCloud, gt: &PointCloud, threshold: f64) -> Result<(f64, f64, f64)> {
    let (to_gt, to_recon) = both_distances(recon, gt)?;
    Ok(score_at(&to_gt, &to_recon, threshold))
}

fn score_at(to_gt: &[f64], to_recon: &[f64], threshold: f64) -> (f64, f64, f64) {
    let p = within(to_gt, threshold);
    let r = within(to_recon, threshold);
    (p, r, harmonic(p, r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub max_dist: f64,
    pub accuracy: f64,
    pub completeness: f64,
    pub overall: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub recon_points: usize,
    pub gt_points: usize,
}

impl EvalReport {
    /// Evaluates with the default truncation when `max_dist` is `None`.
    pub fn compute(recon: &PointCloud, gt: &PointCloud, threshold: f64, max_dist: Option<f64>) -> Result<Self> {
        if !(threshold >= 0.0) {
            return Err(Error::InvalidParameter(format!("evaluation threshold {threshold}")));
        }
        let max_dist = max_dist.unwrap_or(DEFAULT_TRUNCATION_FACTOR * threshold);
        let (to_gt, to_recon) = both_distances(recon, gt)?;
        let accuracy = truncated_mean(&to_gt, max_dist);
        let completeness = truncated_mean(&to_recon, max_dist);
        let (precision, recall, f_score) = score_at(&to_gt, &to_recon, threshold);
        Ok(Self {
            threshold,
            max_dist,
            accuracy,
            completeness,
            overall: 0.5 * (accuracy + completeness),
            precision,
            recall,
            f_score,
            recon_points: recon.len(),
            gt_points: gt.len(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One `key=value` line per field.
impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "threshold={}", self.threshold)?;
        writeln!(f, "max_dist={}", self.max_dist)?;
        writeln!(f, "accuracy={}", self.accuracy)?;
        writeln!(f, "completeness={}", self.completeness)?;
        writeln!(f, "overall={}", self.overall)?;
        writeln!(f, "precision={}", self.precision)?;
        writeln!(f, "recall={}", self.recall)?;
        writeln!(f, "f_score={}", self.f_score)?;
        writeln!(f, "recon_points={}", self.recon_points)?;
        write!(f, "gt_points={}", self.gt_points)
    }
}
