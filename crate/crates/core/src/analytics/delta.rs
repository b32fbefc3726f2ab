use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::ingest::{HouseholdProfile, Indicator};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapParams {
    pub resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for BootstrapParams {
    fn default() -> Self {
        Self { resamples: 10_000, confidence: 0.95, seed: 0 }
    }
}

/// Mean household entropy of those with the characteristic minus those without.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyDelta {
    pub indicator: Indicator,
    pub delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_with: usize,
    pub n_without: usize,
}

impl EntropyDelta {
    /// True if the confidence interval excludes zero.
    pub fn significant(&self) -> bool {
        self.ci_low > 0.0 || self.ci_high < 0.0
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn resample_mean(group: &[f64], rng: &mut impl Rng) -> f64 {
    let n = group.len();
    (0..n).map(|_| group[rng.random_range(0..n)]).sum::<f64>() / n as f64
}

/// Difference in mean household entropy between households with and without
/// `indicator`, with a percentile bootstrap interval. Each resample draws
/// households with replacement within each group. Households whose indicator
/// is unknown, or that lack an entropy value, are excluded.
pub fn characteristic_entropy_delta(
    household_entropy: &BTreeMap<String, f64>,
    profiles: &[HouseholdProfile],
    indicator: Indicator,
    params: &BootstrapParams,
) -> Result<EntropyDelta, AnalyticsError> {
    let mut with = Vec::new();
    let mut without = Vec::new();
    let mut sorted: Vec<&HouseholdProfile> = profiles.iter().collect();
    sorted.sort_by(|a, b| a.household_id.cmp(&b.household_id));
    for p in sorted {
        let (Some(flag), Some(&h)) = (p.get(indicator), household_entropy.get(&p.household_id)) else {
            continue;
        };
        if flag {
            with.push(h);
        } else {
            without.push(h);
        }
    }
    if with.is_empty() && without.is_empty() {
        return Err(AnalyticsError::IndicatorAbsent(indicator));
    }
    for (side, group) in [("with", &with), ("without", &without)] {
        if group.len() < 2 {
            return Err(AnalyticsError::GroupTooSmall { indicator, side, n: group.len() });
        }
    }
    let delta = mean(&with) - mean(&without);
    let mut draws: Vec<f64> = (0..params.resamples)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(params.seed, b as u64);
            resample_mean(&with, &mut r) - resample_mean(&without, &mut r)
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    let alpha = (1.0 - params.confidence) / 2.0;
    let (ci_low, ci_high) = if draws.is_empty() {
        (delta, delta)
    } else {
        (quantile(&draws, alpha), quantile(&draws, 1.0 - alpha))
    };
    Ok(EntropyDelta { indicator, delta, ci_low, ci_high, n_with: with.len(), n_without: without.len() })
}
