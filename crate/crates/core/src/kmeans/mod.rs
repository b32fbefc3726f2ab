//! Threshold-driven clustering of load shapes.
//!
//! [`adaptive_kmeans`] over-clusters until every shape fits its centroid
//! within the RSE threshold, and [`hierarchical_merge`] then greedily
//! consolidates centroids while the violation rate stays under a cap.

mod adaptive;
mod lloyd;
mod merge;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{Profile, HOURS};

pub use adaptive::{adaptive_kmeans, AdaptiveParams};
pub use lloyd::{kmeans, kmeans_best_of, within_cluster_ss, KMeansFit, LloydParams};
pub use merge::hierarchical_merge;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("no shapes to cluster")]
    EmptyInput,
    #[error("cluster center has zero norm")]
    DegenerateCenter,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("labels do not match shapes or centroids: {0}")]
    InconsistentLabels(String),
}

/// Relative squared error of `shape` against `center`:
/// `Σ (s(t) − C(t))² / Σ C(t)²`. Not symmetric in its arguments.
pub fn rse(shape: &Profile, center: &Profile) -> Result<f64, ClusterError> {
    let norm2: f64 = center.iter().map(|c| c * c).sum();
    if norm2 == 0.0 {
        return Err(ClusterError::DegenerateCenter);
    }
    Ok(crate::squared_distance(shape, center) / norm2)
}

/// `rse` with a precomputed, non-zero `Σ C(t)²`.
#[inline]
pub fn rse_with_norm(shape: &Profile, center: &Profile, norm2: f64) -> f64 {
    crate::squared_distance(shape, center) / norm2
}

pub fn norm2(v: &Profile) -> f64 {
    v.iter().map(|c| c * c).sum()
}

/// Arithmetic mean of the selected points, summed in index order.
pub(crate) fn mean_of(points: &[Profile], members: &[usize]) -> Profile {
    let mut sum = [0.0; HOURS];
    for &i in members {
        for (s, x) in sum.iter_mut().zip(&points[i]) {
            *s += x;
        }
    }
    let n = members.len() as f64;
    sum.map(|s| s / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub values: Profile,
    pub member_count: usize,
}

/// Bookkeeping carried alongside a model through clustering and merging.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: u64,
    pub k_init: usize,
    /// Cluster count after adaptive splitting.
    pub k1: usize,
    /// Cluster count after merging, if merging ran.
    pub k2: Option<usize>,
    pub split_rounds: usize,
    pub split_cap_hit: bool,
    pub merge_max_violation: Option<f64>,
    pub merge_steps: usize,
    /// False if the violation rate ever decreased along the merge path.
    pub merge_path_monotone: bool,
    pub warnings: Vec<String>,
}

/// Centroids plus a label for every clustered shape.
///
/// The violation rate is computed when the model is built and the fields are
/// only reachable through accessors, so it always reflects the labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    centroids: Vec<Centroid>,
    labels: Vec<usize>,
    theta: f64,
    violations: usize,
    pub meta: ModelMeta,
}

impl ClusterModel {
    /// Builds a model whose centroids are the means of their members.
    pub fn from_labels(
        points: &[Profile],
        labels: Vec<usize>,
        k: usize,
        theta: f64,
        meta: ModelMeta,
    ) -> Result<Self, ClusterError> {
        let mut members = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            members
                .get_mut(l)
                .ok_or_else(|| ClusterError::InconsistentLabels(format!("label {l} >= {k}")))?
                .push(i);
        }
        let centroids = members.iter().map(|m| mean_of(points, m)).collect();
        Self::new(points, centroids, labels, theta, meta)
    }

    /// Builds a model from explicit centroid values; member counts and the
    /// violation rate are derived from `labels`.
    pub fn new(
        points: &[Profile],
        centroids: Vec<Profile>,
        labels: Vec<usize>,
        theta: f64,
        meta: ModelMeta,
    ) -> Result<Self, ClusterError> {
        if points.len() != labels.len() {
            return Err(ClusterError::InconsistentLabels(format!(
                "{} shapes but {} labels",
                points.len(),
                labels.len()
            )));
        }
        let mut counts = vec![0usize; centroids.len()];
        for &l in &labels {
            *counts
                .get_mut(l)
                .ok_or_else(|| ClusterError::InconsistentLabels(format!("label {l} >= {}", centroids.len())))? += 1;
        }
        let norms: Vec<f64> = centroids.iter().map(norm2).collect();
        let mut violations = 0;
        for (p, &l) in points.iter().zip(&labels) {
            if norms[l] == 0.0 {
                return Err(ClusterError::DegenerateCenter);
            }
            if rse_with_norm(p, &centroids[l], norms[l]) > theta {
                violations += 1;
            }
        }
        let centroids = centroids
            .into_iter()
            .zip(counts)
            .map(|(values, member_count)| Centroid { values, member_count })
            .collect();
        Ok(Self { centroids, labels, theta, violations, meta })
    }

    pub fn centroids(&self) -> &[Centroid] {
        &self.centroids
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn violations(&self) -> usize {
        self.violations
    }

    /// Fraction of shapes whose RSE against their own centroid exceeds theta.
    pub fn violation_rate(&self) -> f64 {
        if self.labels.is_empty() {
            0.0
        } else {
            self.violations as f64 / self.labels.len() as f64
        }
    }

    /// Member indices per centroid, in ascending shape order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.centroids.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}
