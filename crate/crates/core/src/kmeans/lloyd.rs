use rand::Rng;
use rayon::prelude::*;

use crate::{rng, squared_distance, Profile, HOURS};

/// Above this many points the assignment step runs in parallel.
const PAR_THRESHOLD: usize = 4096;
/// Fixed partial-sum chunk; keeps centroid updates bit-stable for any thread count.
const SUM_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LloydParams {
    pub max_iter: usize,
    /// Stop once the relative inertia change drops below this.
    pub tol: f64,
}

impl Default for LloydParams {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Profile>,
    /// Label per entry of the fitted subset, in subset order.
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn nearest(p: &Profile, centroids: &[Profile]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding. Returns fewer than `k` centers when the subset has
/// fewer distinct points.
fn seed_plus_plus<R: Rng>(points: &[Profile], subset: &[usize], k: usize, rng: &mut R) -> Vec<Profile> {
    let mut centers = vec![points[subset[rng.random_range(0..subset.len())]]];
    let mut d2: Vec<f64> = subset.iter().map(|&i| squared_distance(&points[i], &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            break;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
        for (pos, &d) in d2.iter().enumerate() {
            acc += d;
            if acc > target && d > 0.0 {
                pick = pos;
                break;
            }
        }
        let c = points[subset[pick]];
        for (slot, &i) in d2.iter_mut().zip(subset) {
            *slot = slot.min(squared_distance(&points[i], &c));
        }
        centers.push(c);
    }
    centers
}

fn assign(points: &[Profile], subset: &[usize], centroids: &[Profile]) -> Vec<(usize, f64)> {
    if subset.len() >= PAR_THRESHOLD {
        subset.par_iter().map(|&i| nearest(&points[i], centroids)).collect()
    } else {
        subset.iter().map(|&i| nearest(&points[i], centroids)).collect()
    }
}

fn partial_sums(points: &[Profile], subset: &[usize], labels: &[usize], k: usize) -> (Vec<Profile>, Vec<usize>) {
    let fold = |(idx, lab): (&[usize], &[usize])| {
        let mut sums = vec![[0.0; HOURS]; k];
        let mut counts = vec![0usize; k];
        for (&i, &l) in idx.iter().zip(lab) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(&points[i]) {
                *s += x;
            }
        }
        (sums, counts)
    };
    let parts: Vec<(Vec<Profile>, Vec<usize>)> = if subset.len() >= PAR_THRESHOLD {
        subset
            .par_chunks(SUM_CHUNK)
            .zip(labels.par_chunks(SUM_CHUNK))
            .map(fold)
            .collect()
    } else {
        subset.chunks(SUM_CHUNK).zip(labels.chunks(SUM_CHUNK)).map(fold).collect()
    };
    let mut sums = vec![[0.0; HOURS]; k];
    let mut counts = vec![0usize; k];
    for (s, c) in parts {
        for j in 0..k {
            counts[j] += c[j];
            for (a, b) in sums[j].iter_mut().zip(&s[j]) {
                *a += b;
            }
        }
    }
    (sums, counts)
}

fn member_means(points: &[Profile], subset: &[usize], labels: &[usize], centroids: &mut [Profile]) {
    let (sums, counts) = partial_sums(points, subset, labels, centroids.len());
    for (j, c) in centroids.iter_mut().enumerate() {
        if counts[j] > 0 {
            let n = counts[j] as f64;
            *c = sums[j].map(|s| s / n);
        }
    }
}

/// Lloyd iterations from the given centroids. Returns true on convergence.
fn lloyd(
    points: &[Profile],
    subset: &[usize],
    centroids: &mut [Profile],
    labels: &mut Vec<usize>,
    params: LloydParams,
    iterations: &mut usize,
) -> bool {
    let k = centroids.len();
    let mut prev_inertia = f64::INFINITY;
    while *iterations < params.max_iter {
        *iterations += 1;
        let assigned = assign(points, subset, centroids);
        let new_labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        let inertia: f64 = assigned.iter().map(|a| a.1).sum();
        let unchanged = new_labels == *labels;
        *labels = new_labels;
        let settled = prev_inertia.is_finite() && prev_inertia - inertia <= params.tol * prev_inertia;
        if unchanged || settled {
            return true;
        }
        prev_inertia = inertia;

        let (sums, mut counts) = partial_sums(points, subset, labels, k);
        for j in 0..k {
            if counts[j] > 0 {
                let n = counts[j] as f64;
                centroids[j] = sums[j].map(|s| s / n);
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let far = labels
                .iter()
                .zip(subset)
                .enumerate()
                .filter(|(_, (&l, _))| counts[l] > 1)
                .map(|(pos, (&l, &i))| (pos, squared_distance(&points[i], &centroids[l])))
                .fold(None::<(usize, f64)>, |best, cur| match best {
                    Some(b) if b.1 >= cur.1 => Some(b),
                    _ => Some(cur),
                });
            if let Some((pos, _)) = far {
                counts[labels[pos]] -= 1;
                labels[pos] = j;
                counts[j] = 1;
                centroids[j] = points[subset[pos]];
            }
        }
    }
    false
}

/// One sequential pass of Hartigan single-point moves: a point changes
/// cluster whenever that strictly lowers the within-cluster sum of squares.
/// `centroids` must be the member means on entry. Returns true if anything moved.
fn hartigan_pass(points: &[Profile], subset: &[usize], centroids: &mut [Profile], labels: &mut [usize]) -> bool {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    let mut moved = false;
    for (pos, &i) in subset.iter().enumerate() {
        let x = &points[i];
        let a = labels[pos];
        let na = counts[a] as f64;
        if counts[a] < 2 {
            continue;
        }
        let leave = na / (na - 1.0) * squared_distance(x, &centroids[a]);
        let mut best: Option<(usize, f64)> = None;
        for (b, c) in centroids.iter().enumerate() {
            if b == a {
                continue;
            }
            let nb = counts[b] as f64;
            let join = nb / (nb + 1.0) * squared_distance(x, c);
            if best.is_none_or(|(_, d)| join < d) {
                best = Some((b, join));
            }
        }
        let Some((b, join)) = best else { continue };
        if leave - join > 1e-12 * leave {
            let nb = counts[b] as f64;
            for t in 0..HOURS {
                centroids[a][t] = (na * centroids[a][t] - x[t]) / (na - 1.0);
                centroids[b][t] = (nb * centroids[b][t] + x[t]) / (nb + 1.0);
            }
            counts[a] -= 1;
            counts[b] += 1;
            labels[pos] = b;
            moved = true;
        }
    }
    moved
}

/// k-means over `points[subset]` from k-means++ seeds.
///
/// Lloyd iterations are alternated with Hartigan single-point moves until
/// neither changes the partition; Lloyd alone stalls in poor fixed points on
/// small high-dimensional inputs. Ties in assignment go to the lowest
/// centroid index. An emptied cluster is re-seeded with the point farthest
/// from its centroid. Returned centroids are the exact member means.
pub fn kmeans<R: Rng>(points: &[Profile], subset: &[usize], k: usize, params: LloydParams, rng: &mut R) -> KMeansFit {
    assert!(!subset.is_empty() && k >= 1, "kmeans needs points and k >= 1");
    let mut centroids = seed_plus_plus(points, subset, k.min(subset.len()), rng);
    let mut labels: Vec<usize> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..params.max_iter {
        converged = lloyd(points, subset, &mut centroids, &mut labels, params, &mut iterations);
        member_means(points, subset, &labels, &mut centroids);
        if !hartigan_pass(points, subset, &mut centroids, &mut labels) {
            break;
        }
        member_means(points, subset, &labels, &mut centroids);
    }
    let inertia = labels
        .iter()
        .zip(subset)
        .map(|(&l, &i)| squared_distance(&points[i], &centroids[l]))
        .sum();

    KMeansFit { centroids, labels, inertia, iterations, converged }
}

/// Best (lowest inertia) of `restarts` independently seeded runs.
pub fn kmeans_best_of(points: &[Profile], k: usize, restarts: usize, seed: u64) -> KMeansFit {
    let subset: Vec<usize> = (0..points.len()).collect();
    (0..restarts.max(1))
        .map(|r| {
            let mut rng = rng::stream(seed, r as u64);
            kmeans(points, &subset, k, LloydParams::default(), &mut rng)
        })
        .reduce(|best, fit| if fit.inertia < best.inertia { fit } else { best })
        .expect("at least one restart")
}

/// Within-cluster sum of squared distances to the member means.
pub fn within_cluster_ss(points: &[Profile], labels: &[usize], k: usize) -> f64 {
    let mut members = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    members
        .iter()
        .filter(|m| !m.is_empty())
        .map(|m| {
            let c = super::mean_of(points, m);
            m.iter().map(|&i| squared_distance(&points[i], &c)).sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(a: f64, b: f64) -> Profile {
        let mut p = [0.0; HOURS];
        p[0] = a;
        p[1] = b;
        p
    }

    #[test]
    fn separates_two_blobs() {
        let pts: Vec<Profile> = (0..20)
            .map(|i| if i < 10 { point(i as f64 * 0.01, 0.0) } else { point(5.0 + i as f64 * 0.01, 1.0) })
            .collect();
        let fit = kmeans_best_of(&pts, 2, 3, 1);
        assert!(fit.converged);
        assert!(fit.labels[..10].iter().all(|&l| l == fit.labels[0]));
        assert!(fit.labels[10..].iter().all(|&l| l == fit.labels[10]));
        assert_ne!(fit.labels[0], fit.labels[10]);
    }

    #[test]
    fn identical_points_yield_one_center() {
        let pts = vec![point(1.0, 2.0); 7];
        let subset: Vec<usize> = (0..7).collect();
        let fit = kmeans(&pts, &subset, 3, LloydParams::default(), &mut rng::rng(0));
        assert_eq!(fit.centroids.len(), 1);
        assert_eq!(fit.inertia, 0.0);
    }

    #[test]
    fn deterministic_for_seed() {
        let pts: Vec<Profile> = (0..300).map(|i| point((i % 17) as f64, (i % 5) as f64)).collect();
        assert_eq!(kmeans_best_of(&pts, 4, 2, 11), kmeans_best_of(&pts, 4, 2, 11));
    }
}
