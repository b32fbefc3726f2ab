use super::AnalyticsError;
use crate::{squared_distance, Profile};

/// Davies-Bouldin index: mean over clusters of the worst
/// `(σ_i + σ_j) / d(c_i, c_j)`, where `σ` is the mean Euclidean distance of
/// members to their centroid. Lower is better.
pub fn davies_bouldin(points: &[Profile], labels: &[usize], centroids: &[Profile]) -> Result<f64, AnalyticsError> {
    let k = centroids.len();
    if k < 2 {
        return Err(AnalyticsError::TooFewClusters(k));
    }
    let mut spread = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        let c = centroids.get(l).ok_or(AnalyticsError::LabelOutOfRange { label: l, k })?;
        spread[l] += squared_distance(p, c).sqrt();
        counts[l] += 1;
    }
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(AnalyticsError::EmptyCluster(empty));
    }
    for (s, &n) in spread.iter_mut().zip(&counts) {
        *s /= n as f64;
    }
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for j in (0..k).filter(|&j| j != i) {
            let d = squared_distance(&centroids[i], &centroids[j]).sqrt();
            if d == 0.0 {
                return Err(AnalyticsError::CoincidentCentroids(i.min(j), i.max(j)));
            }
            worst = worst.max((spread[i] + spread[j]) / d);
        }
        total += worst;
    }
    Ok(total / k as f64)
}
