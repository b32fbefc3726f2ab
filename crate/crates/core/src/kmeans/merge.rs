use log::warn;

use super::{norm2, rse_with_norm, ClusterModel};
use crate::{squared_distance, Profile};

struct Active {
    values: Profile,
    members: Vec<usize>,
    violations: usize,
    nn: Option<(f64, usize)>,
}

fn count_violations(points: &[Profile], members: &[usize], center: &Profile, theta: f64) -> usize {
    let n2 = norm2(center);
    members
        .iter()
        .filter(|&&i| rse_with_norm(&points[i], center, n2) > theta)
        .count()
}

/// Nearest other active cluster; ties go to the lowest id.
fn nearest(clusters: &[Option<Active>], me: usize) -> Option<(f64, usize)> {
    let own = &clusters[me].as_ref()?.values;
    let mut best: Option<(f64, usize)> = None;
    for (j, c) in clusters.iter().enumerate() {
        let Some(c) = c else { continue };
        if j == me {
            continue;
        }
        let d = squared_distance(own, &c.values);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, j));
        }
    }
    best
}

fn pair(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Greedily merges the closest pair of centroids (Euclidean, ties to the
/// lowest id pair) until the next merge would push the violation rate to
/// `max_violation` or beyond.
///
/// The merged centroid is the member-count-weighted mean of the pair, and
/// members keep the merged label; nothing is re-assigned across clusters.
/// The returned model is the last state on the merge path whose violation
/// rate stays strictly below the cap.
pub fn hierarchical_merge(points: &[Profile], model: &ClusterModel, max_violation: f64) -> ClusterModel {
    let theta = model.theta();
    let n = points.len();
    let mut meta = model.meta.clone();
    meta.merge_max_violation = Some(max_violation);
    meta.merge_path_monotone = true;

    let rate = |v: usize| if n == 0 { 0.0 } else { v as f64 / n as f64 };
    if model.len() < 2 || rate(model.violations()) >= max_violation {
        meta.k2 = Some(model.len());
        let mut out = model.clone();
        out.meta = meta;
        return out;
    }

    let mut clusters: Vec<Option<Active>> = model
        .members()
        .into_iter()
        .zip(model.centroids())
        .map(|(members, c)| {
            let violations = count_violations(points, &members, &c.values, theta);
            Some(Active { values: c.values, members, violations, nn: None })
        })
        .collect();
    for i in 0..clusters.len() {
        let nn = nearest(&clusters, i);
        clusters[i].as_mut().expect("active").nn = nn;
    }

    let mut total: usize = clusters.iter().flatten().map(|c| c.violations).sum();
    let mut active = clusters.len();
    let mut steps = 0;

    while active >= 2 {
        let mut best: Option<(f64, (usize, usize))> = None;
        for (i, c) in clusters.iter().enumerate() {
            let Some((d, j)) = c.as_ref().and_then(|c| c.nn) else { continue };
            let cand = (d, pair(i, j));
            if best.is_none_or(|b| cand.0 < b.0 || (cand.0 == b.0 && cand.1 < b.1)) {
                best = Some(cand);
            }
        }
        let Some((_, (a, b))) = best else { break };

        let (ca, cb) = (clusters[a].as_ref().expect("active"), clusters[b].as_ref().expect("active"));
        let (na, nb) = (ca.members.len() as f64, cb.members.len() as f64);
        let mut merged = [0.0; crate::HOURS];
        for (t, m) in merged.iter_mut().enumerate() {
            *m = (na * ca.values[t] + nb * cb.values[t]) / (na + nb);
        }
        let v_new = count_violations(points, &ca.members, &merged, theta)
            + count_violations(points, &cb.members, &merged, theta);
        let new_total = total - ca.violations - cb.violations + v_new;
        if rate(new_total) >= max_violation {
            break;
        }
        if new_total < total {
            meta.merge_path_monotone = false;
        }

        let removed = clusters[b].take().expect("active");
        let keep = clusters[a].as_mut().expect("active");
        keep.values = merged;
        keep.members.extend(removed.members);
        keep.members.sort_unstable();
        keep.violations = v_new;
        total = new_total;
        active -= 1;
        steps += 1;

        let nn_a = nearest(&clusters, a);
        clusters[a].as_mut().expect("active").nn = nn_a;
        let merged_values = merged;
        for r in 0..clusters.len() {
            if r == a {
                continue;
            }
            let Some(c) = clusters[r].as_ref() else { continue };
            let stale = matches!(c.nn, Some((_, j)) if j == a || j == b);
            if stale {
                let nn = nearest(&clusters, r);
                clusters[r].as_mut().expect("active").nn = nn;
            } else {
                let d = squared_distance(&c.values, &merged_values);
                if c.nn.is_none_or(|(bd, bj)| d < bd || (d == bd && a < bj)) {
                    clusters[r].as_mut().expect("active").nn = Some((d, a));
                }
            }
        }
    }

    if !meta.merge_path_monotone {
        let msg = "violation rate decreased along the merge path".to_string();
        warn!("{msg}");
        meta.warnings.push(msg);
    }

    let survivors: Vec<Active> = clusters.into_iter().flatten().collect();
    let mut labels = vec![0; n];
    for (j, c) in survivors.iter().enumerate() {
        for &i in &c.members {
            labels[i] = j;
        }
    }
    meta.k2 = Some(survivors.len());
    meta.merge_steps = steps;
    let centroids = survivors.into_iter().map(|c| c.values).collect();
    ClusterModel::new(points, centroids, labels, theta, meta).expect("merge preserves label consistency")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kmeans::ModelMeta;
    use crate::HOURS;

    fn shape(pairs: &[(usize, f64)]) -> Profile {
        let mut p = [0.0; HOURS];
        for &(h, v) in pairs {
            p[h] = v;
        }
        p
    }

    #[test]
    fn identical_centroids_merge_without_changing_rse() {
        let s = shape(&[(2, 0.5), (9, 0.5)]);
        let t = shape(&[(2, 0.4), (9, 0.6)]);
        let pts = vec![s, t, s, t];
        let c = crate::kmeans::mean_of(&pts, &[0, 1]);
        let model = ClusterModel::new(&pts, vec![c, c], vec![0, 0, 1, 1], 0.3, ModelMeta::default()).unwrap();
        let merged = hierarchical_merge(&pts, &model, 0.05);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged.centroids()[0].values, c);
        assert_eq!(merged.violations(), 0);
        assert_eq!(merged.meta.k2, Some(1));
    }

    #[test]
    fn zero_cap_returns_input() {
        let pts = vec![shape(&[(1, 1.0)]), shape(&[(1, 0.9), (2, 0.1)])];
        let model = ClusterModel::from_labels(&pts, vec![0, 1], 2, 0.3, ModelMeta::default()).unwrap();
        let merged = hierarchical_merge(&pts, &model, 0.0);
        assert_eq!(merged.centroids(), model.centroids());
        assert_eq!(merged.labels(), model.labels());
    }
}
