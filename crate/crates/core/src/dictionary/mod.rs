//! Violation-budgeted dictionary truncation and nearest-shape assignment.

mod persist;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::DayKey;
use crate::kmeans::{norm2, rse_with_norm, ClusterModel};
use crate::preprocess::ShapeVector;
use crate::{squared_distance, Profile};

pub use persist::{dictionary_digest, load_dictionary, save_dictionary, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error("cannot truncate an empty model")]
    EmptyModel,
    #[error("violation budget V must lie in (0, 1), got {0}")]
    InvalidBudget(f64),
    #[error("model labels {labels} shapes but {shapes} were supplied")]
    ShapeMismatch { labels: usize, shapes: usize },
    #[error("dictionary has no shapes")]
    EmptyDictionary,
    #[error("cannot access {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dictionary file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dictionary schema version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },
    #[error("dictionary digest mismatch: stored {stored}, computed {computed}")]
    CorruptedDigest { stored: String, computed: String },
    #[error("dictionary invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryShape {
    /// Rank by descending kWh coverage; stable across save/load.
    pub id: usize,
    pub values: Profile,
    pub member_count: usize,
    /// Total raw kWh of the clustering members assigned to this shape.
    pub kwh: f64,
}

/// One pass of the truncation loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationStep {
    /// Removed cluster ids, in the input model's numbering.
    pub removed: Vec<usize>,
    pub removed_members: usize,
    pub violation_after: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub theta: f64,
    pub truncation_v: f64,
    pub merge_max_violation: Option<f64>,
    pub k1: usize,
    pub k2: usize,
    /// Violation rate of the last state that still satisfied the loop guard.
    pub violation_before_exit: f64,
    /// Violation rate of the returned state; may exceed V.
    pub violation_after_exit: f64,
    pub steps: Vec<TruncationStep>,
    pub rng_algorithm: String,
    pub input_digests: BTreeMap<String, String>,
    pub parameters: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDictionary {
    pub shapes: Vec<DictionaryShape>,
    pub theta: f64,
    pub truncation_v: f64,
    pub provenance: Provenance,
}

impl ClusterDictionary {
    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn centroids(&self) -> Vec<Profile> {
        self.shapes.iter().map(|s| s.values).collect()
    }
}

/// Result of the raw truncation loop, in the input model's cluster numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    /// Surviving cluster ids, ascending.
    pub kept: Vec<usize>,
    /// Label per shape, in the input model's numbering.
    pub labels: Vec<usize>,
    pub counts: Vec<usize>,
    pub violation_before_exit: f64,
    pub violation_after_exit: f64,
    pub steps: Vec<TruncationStep>,
}

/// Nearest centroid by Euclidean distance among `candidates`; ties go to the
/// earliest candidate. Returns (candidate position, squared distance).
fn nearest_among(p: &Profile, centroids: &[Profile], candidates: &[usize]) -> (usize, f64) {
    let mut best = (candidates[0], f64::INFINITY);
    for &j in candidates {
        let d = squared_distance(p, &centroids[j]);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn violation_rate(points: &[Profile], labels: &[usize], centroids: &[Profile], norms: &[f64], theta: f64) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let v = points
        .par_iter()
        .zip(labels.par_iter())
        .filter(|(p, &l)| rse_with_norm(p, &centroids[l], norms[l]) > theta)
        .count();
    v as f64 / points.len() as f64
}

/// Iterative truncation under a violation budget `v`.
///
/// While the violation rate is below `v` and more than one cluster remains:
/// remove the longest prefix of clusters, ordered by ascending member count
/// then id, whose cumulative membership is at most `floor(v·N)` (always at
/// least one, never all), re-home their members at the nearest surviving
/// centroid, and recompute the violation rate. Centroid values are left
/// unchanged; only memberships move. The final rate may exceed `v`.
pub fn truncate_model(points: &[Profile], model: &ClusterModel, v: f64) -> Result<Truncation, DictionaryError> {
    if model.is_empty() {
        return Err(DictionaryError::EmptyModel);
    }
    if !(v > 0.0 && v < 1.0) {
        return Err(DictionaryError::InvalidBudget(v));
    }
    if points.len() != model.labels().len() {
        return Err(DictionaryError::ShapeMismatch { labels: model.labels().len(), shapes: points.len() });
    }
    let n = points.len();
    let theta = model.theta();
    let centroids: Vec<Profile> = model.centroids().iter().map(|c| c.values).collect();
    let norms: Vec<f64> = centroids.iter().map(norm2).collect();
    let mut labels = model.labels().to_vec();
    let mut counts: Vec<usize> = model.centroids().iter().map(|c| c.member_count).collect();
    let mut alive = vec![true; centroids.len()];
    let budget = (v * n as f64 + 1e-9).floor() as usize;

    let mut violation = model.violation_rate();
    let mut before = violation;
    let mut steps = Vec::new();

    loop {
        let mut order: Vec<usize> = (0..centroids.len()).filter(|&j| alive[j]).collect();
        if violation >= v || order.len() <= 1 {
            break;
        }
        order.sort_by_key(|&j| (counts[j], j));
        let mut removed = Vec::new();
        let mut cum = 0;
        for &j in &order[..order.len() - 1] {
            if cum + counts[j] > budget {
                if removed.is_empty() {
                    removed.push(j);
                }
                break;
            }
            cum += counts[j];
            removed.push(j);
        }
        for &j in &removed {
            alive[j] = false;
        }
        let survivors: Vec<usize> = (0..centroids.len()).filter(|&j| alive[j]).collect();
        let orphans: Vec<usize> = (0..n).filter(|&i| !alive[labels[i]]).collect();
        let rehomed: Vec<usize> = orphans
            .par_iter()
            .map(|&i| nearest_among(&points[i], &centroids, &survivors).0)
            .collect();
        for (&i, &j) in orphans.iter().zip(&rehomed) {
            labels[i] = j;
        }
        counts = vec![0; centroids.len()];
        for &l in &labels {
            counts[l] += 1;
        }
        before = violation;
        violation = violation_rate(points, &labels, &centroids, &norms, theta);
        removed.sort_unstable();
        steps.push(TruncationStep { removed, removed_members: orphans.len(), violation_after: violation });
    }

    let kept: Vec<usize> = (0..centroids.len()).filter(|&j| alive[j]).collect();
    Ok(Truncation {
        kept,
        labels,
        counts,
        violation_before_exit: before,
        violation_after_exit: violation,
        steps,
    })
}

/// Truncates a merged model into a dictionary ordered by descending member kWh.
///
/// `shapes` are the clustered shapes, in the order the model labels them.
pub fn truncate(shapes: &[ShapeVector], model: &ClusterModel, v: f64) -> Result<ClusterDictionary, DictionaryError> {
    let points: Vec<Profile> = shapes.iter().map(|s| s.values).collect();
    let t = truncate_model(&points, model, v)?;
    let mut kwh = vec![0.0; model.len()];
    for (s, &l) in shapes.iter().zip(&t.labels) {
        kwh[l] += s.day_total_kwh;
    }
    let mut kept = t.kept.clone();
    kept.sort_by(|&a, &b| kwh[b].total_cmp(&kwh[a]).then(a.cmp(&b)));
    let dict_shapes = kept
        .iter()
        .enumerate()
        .map(|(rank, &j)| DictionaryShape {
            id: rank,
            values: model.centroids()[j].values,
            member_count: t.counts[j],
            kwh: kwh[j],
        })
        .collect();
    let meta = &model.meta;
    Ok(ClusterDictionary {
        shapes: dict_shapes,
        theta: model.theta(),
        truncation_v: v,
        provenance: Provenance {
            seed: meta.seed,
            theta: model.theta(),
            truncation_v: v,
            merge_max_violation: meta.merge_max_violation,
            k1: meta.k1,
            k2: meta.k2.unwrap_or(model.len()),
            violation_before_exit: t.violation_before_exit,
            violation_after_exit: t.violation_after_exit,
            steps: t.steps,
            rng_algorithm: crate::rng::RNG_ALGORITHM.to_string(),
            input_digests: BTreeMap::new(),
            parameters: BTreeMap::new(),
        },
    })
}

/// A household-day mapped to its nearest dictionary shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub key: DayKey,
    pub cluster_id: usize,
    pub distance: f64,
    pub rse: f64,
}

/// Nearest dictionary shape for each profile: (shape id, Euclidean distance, RSE).
/// Ties go to the lowest shape id.
pub fn assign_profiles(points: &[Profile], dict: &ClusterDictionary) -> Result<Vec<(usize, f64, f64)>, DictionaryError> {
    if dict.is_empty() {
        return Err(DictionaryError::EmptyDictionary);
    }
    let centroids = dict.centroids();
    let norms: Vec<f64> = centroids.iter().map(norm2).collect();
    Ok(points
        .par_iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (j, c) in centroids.iter().enumerate() {
                let d = squared_distance(p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            let (j, d2) = best;
            (dict.shapes[j].id, d2.sqrt(), rse_with_norm(p, &centroids[j], norms[j]))
        })
        .collect())
}

pub fn assign_all(shapes: &[ShapeVector], dict: &ClusterDictionary) -> Result<Vec<Assignment>, DictionaryError> {
    let points: Vec<Profile> = shapes.iter().map(|s| s.values).collect();
    Ok(assign_profiles(&points, dict)?
        .into_iter()
        .zip(shapes)
        .map(|((cluster_id, distance, rse), s)| Assignment { key: s.key.clone(), cluster_id, distance, rse })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kmeans::ModelMeta;
    use crate::HOURS;

    fn spike(h: usize, w: f64) -> Profile {
        let mut p = [(1.0 - w) / 23.0; HOURS];
        p[h] = w;
        p
    }

    fn dict_of(centroids: Vec<Profile>) -> ClusterDictionary {
        ClusterDictionary {
            shapes: centroids
                .into_iter()
                .enumerate()
                .map(|(id, values)| DictionaryShape { id, values, member_count: 1, kwh: 1.0 })
                .collect(),
            theta: 0.3,
            truncation_v: 0.3,
            provenance: Provenance::default(),
        }
    }

    #[test]
    fn already_violating_model_is_unchanged() {
        let pts = vec![spike(0, 1.0), spike(5, 1.0), spike(5, 1.0)];
        let u = [1.0 / 24.0; HOURS];
        let model = ClusterModel::new(&pts, vec![u, spike(5, 1.0)], vec![0, 1, 1], 0.3, ModelMeta::default()).unwrap();
        assert!(model.violation_rate() >= 0.3);
        let t = truncate_model(&pts, &model, 0.3).unwrap();
        assert!(t.steps.is_empty());
        assert_eq!(t.kept, vec![0, 1]);
        assert_eq!(t.labels, model.labels());
    }

    #[test]
    fn budget_validation() {
        let pts = vec![spike(0, 1.0)];
        let model = ClusterModel::from_labels(&pts, vec![0], 1, 0.3, ModelMeta::default()).unwrap();
        assert!(matches!(truncate_model(&pts, &model, 0.0), Err(DictionaryError::InvalidBudget(_))));
        assert!(matches!(truncate_model(&pts, &model, 1.0), Err(DictionaryError::InvalidBudget(_))));
    }

    #[test]
    fn assignment_identity_and_tie() {
        let shapes: Vec<Profile> = (0..10).map(|h| spike(h, 0.5)).collect();
        let dict = dict_of(shapes.clone());
        let out = assign_profiles(&[shapes[7]], &dict).unwrap();
        assert_eq!(out[0].0, 7);
        assert_eq!(out[0].1, 0.0);
        assert_eq!(out[0].2, 0.0);

        // midway between shapes 3 and 5
        let mid: Profile = std::array::from_fn(|t| 0.5 * (shapes[3][t] + shapes[5][t]));
        let only = dict_of(vec![shapes[0], shapes[1], shapes[2], shapes[3], shapes[4], shapes[5]]);
        let d3 = squared_distance(&mid, &shapes[3]);
        let d5 = squared_distance(&mid, &shapes[5]);
        assert_eq!(d3, d5);
        assert_eq!(assign_profiles(&[mid], &only).unwrap()[0].0, 3);
    }

    #[test]
    fn empty_dictionary_rejected() {
        assert!(matches!(assign_profiles(&[spike(0, 1.0)], &dict_of(vec![])), Err(DictionaryError::EmptyDictionary)));
    }
}
