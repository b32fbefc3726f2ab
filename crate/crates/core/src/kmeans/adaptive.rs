use log::warn;
use rayon::prelude::*;

use super::lloyd::{kmeans, LloydParams};
use super::{mean_of, norm2, rse_with_norm, ClusterError, ClusterModel, ModelMeta};
use crate::{rng, Profile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveParams {
    /// RSE threshold; a shape violates when its RSE is strictly greater.
    pub theta: f64,
    pub k_init: usize,
    /// Maximum number of split rounds (depth of the split tree).
    pub max_split_rounds: usize,
    pub lloyd: LloydParams,
}

impl AdaptiveParams {
    pub fn new(theta: f64) -> Self {
        Self { theta, ..Self::default() }
    }
}

impl Default for AdaptiveParams {
    fn default() -> Self {
        Self { theta: 0.3, k_init: 10, max_split_rounds: 200, lloyd: LloydParams::default() }
    }
}

struct Node {
    members: Vec<usize>,
    seed: u64,
    settled: bool,
}

enum Outcome {
    Leaf(Node),
    Split(Node, Node),
}

fn violates(points: &[Profile], members: &[usize], theta: f64) -> Result<bool, ClusterError> {
    if members.len() < 2 {
        return Ok(false);
    }
    let c = mean_of(points, members);
    let n2 = norm2(&c);
    if n2 == 0.0 {
        return Err(ClusterError::DegenerateCenter);
    }
    Ok(members.iter().any(|&i| rse_with_norm(&points[i], &c, n2) > theta))
}

fn split(points: &[Profile], node: Node, params: &AdaptiveParams) -> Result<Outcome, ClusterError> {
    if node.settled || !violates(points, &node.members, params.theta)? {
        return Ok(Outcome::Leaf(Node { settled: true, ..node }));
    }
    let mut rng = rng::rng(node.seed);
    let fit = kmeans(points, &node.members, 2, params.lloyd, &mut rng);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (&i, &l) in node.members.iter().zip(&fit.labels) {
        if l == 0 { a.push(i) } else { b.push(i) }
    }
    if a.is_empty() || b.is_empty() {
        // identical points never violate, so Lloyd only lands here on degenerate input
        return Ok(Outcome::Leaf(Node { settled: true, ..node }));
    }
    Ok(Outcome::Split(
        Node { members: a, seed: rng::derive(node.seed, 1), settled: false },
        Node { members: b, seed: rng::derive(node.seed, 2), settled: false },
    ))
}

/// Over-clusters `shapes` so that every shape's RSE against its cluster mean
/// is at most `theta`.
///
/// A global Lloyd run with `k_init` k-means++ seeds is followed by rounds in
/// which every cluster holding a violating shape is split by 2-means on its
/// members. Each split is seeded from the cluster's position in the split
/// tree, not from a shared stream, so the tree is the same for every theta
/// and the cluster count can only shrink as theta grows. If the round cap is
/// reached the residual violations are reported in `meta.warnings`.
pub fn adaptive_kmeans(shapes: &[Profile], params: AdaptiveParams, seed: u64) -> Result<ClusterModel, ClusterError> {
    if shapes.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    if !(params.theta > 0.0) {
        return Err(ClusterError::InvalidParameter(format!("theta must be positive, got {}", params.theta)));
    }
    if params.k_init == 0 {
        return Err(ClusterError::InvalidParameter("k_init must be at least 1".into()));
    }

    let all: Vec<usize> = (0..shapes.len()).collect();
    let mut init_rng = rng::stream(seed, 0);
    let fit = kmeans(shapes, &all, params.k_init, params.lloyd, &mut init_rng);
    let mut groups = vec![Vec::new(); fit.centroids.len()];
    for (i, &l) in fit.labels.iter().enumerate() {
        groups[l].push(i);
    }
    let mut leaves: Vec<Node> = groups
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(j, members)| Node { members, seed: rng::derive(seed, 1_000 + j as u64), settled: false })
        .collect();

    let mut rounds = 0;
    let mut pending = true;
    while pending && rounds < params.max_split_rounds {
        rounds += 1;
        let outcomes: Vec<Outcome> = leaves
            .into_par_iter()
            .map(|node| split(shapes, node, &params))
            .collect::<Result<_, _>>()?;
        pending = false;
        leaves = Vec::with_capacity(outcomes.len() * 2);
        for o in outcomes {
            match o {
                Outcome::Leaf(n) => leaves.push(n),
                Outcome::Split(a, b) => {
                    pending = true;
                    leaves.push(a);
                    leaves.push(b);
                }
            }
        }
    }

    let mut labels = vec![0; shapes.len()];
    for (j, node) in leaves.iter().enumerate() {
        for &i in &node.members {
            labels[i] = j;
        }
    }
    let meta = ModelMeta {
        seed,
        k_init: params.k_init,
        k1: leaves.len(),
        split_rounds: rounds,
        merge_path_monotone: true,
        ..Default::default()
    };
    let mut model = ClusterModel::from_labels(shapes, labels, leaves.len(), params.theta, meta)?;
    if model.violations() > 0 {
        model.meta.split_cap_hit = true;
        let msg = format!(
            "split cap of {} rounds reached with {} residual violations ({:.4})",
            params.max_split_rounds,
            model.violations(),
            model.violation_rate()
        );
        warn!("{msg}");
        model.meta.warnings.push(msg);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::HOURS;

    fn spike(h: usize) -> Profile {
        let mut p = [0.0; HOURS];
        p[h] = 1.0;
        p
    }

    #[test]
    fn repeated_shape_is_one_cluster() {
        let mut s = [0.0; HOURS];
        s[3] = 0.25;
        s[17] = 0.75;
        let shapes = vec![s; 40];
        let m = adaptive_kmeans(&shapes, AdaptiveParams::new(0.3), 1).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.centroids()[0].values, s);
        assert_eq!(m.violations(), 0);
    }

    #[test]
    fn splits_until_no_violations() {
        let shapes: Vec<Profile> = (0..HOURS).map(spike).collect();
        let params = AdaptiveParams { k_init: 2, ..AdaptiveParams::new(0.3) };
        let m = adaptive_kmeans(&shapes, params, 5).unwrap();
        assert_eq!(m.violations(), 0);
        assert_eq!(m.len(), HOURS);
        assert!(!m.meta.split_cap_hit);
    }

    #[test]
    fn split_cap_reports_residual() {
        let shapes: Vec<Profile> = (0..HOURS).map(spike).collect();
        let params = AdaptiveParams { k_init: 1, max_split_rounds: 1, ..AdaptiveParams::new(0.3) };
        let m = adaptive_kmeans(&shapes, params, 5).unwrap();
        assert!(m.meta.split_cap_hit);
        assert!(m.violations() > 0);
        assert_eq!(m.meta.warnings.len(), 1);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(adaptive_kmeans(&[], AdaptiveParams::default(), 0), Err(ClusterError::EmptyInput));
        assert!(matches!(
            adaptive_kmeans(&[spike(0)], AdaptiveParams::new(0.0), 0),
            Err(ClusterError::InvalidParameter(_))
        ));
    }
}
