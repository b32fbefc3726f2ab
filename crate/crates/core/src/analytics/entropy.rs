use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::{AnalyticsError, DayRecord, DISTRIBUTION_TOLERANCE};
use crate::ingest::{DayType, Season};

/// Shannon entropy in nats. Zero entries contribute nothing.
pub fn entropy(frequencies: &[f64]) -> Result<f64, AnalyticsError> {
    let sum: f64 = frequencies.iter().sum();
    if frequencies.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(AnalyticsError::NotADistribution { sum });
    }
    Ok(frequencies.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum())
}

/// Entropy of the empirical distribution given by `counts`; `None` if empty.
pub fn entropy_of_counts<'a>(counts: impl IntoIterator<Item = &'a usize>) -> Option<f64> {
    let counts: Vec<usize> = counts.into_iter().copied().collect();
    let n: usize = counts.iter().sum();
    if n == 0 {
        return None;
    }
    let n = n as f64;
    Some(
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum(),
    )
}

type Predicate = dyn Fn(&DayRecord) -> bool + Send + Sync;

/// A labelled subset of household-days.
#[derive(Clone)]
pub struct Stratum {
    pub label: String,
    predicate: Arc<Predicate>,
}

impl fmt::Debug for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stratum").field("label", &self.label).finish_non_exhaustive()
    }
}

impl Stratum {
    pub fn new(label: impl Into<String>, predicate: impl Fn(&DayRecord) -> bool + Send + Sync + 'static) -> Self {
        Self { label: label.into(), predicate: Arc::new(predicate) }
    }

    pub fn contains(&self, r: &DayRecord) -> bool {
        (self.predicate)(r)
    }

    pub fn all() -> Self {
        Self::new("all", |_| true)
    }

    pub fn by_season() -> Vec<Self> {
        Season::ALL
            .into_iter()
            .map(|s| Self::new(s.name(), move |r: &DayRecord| r.season == s))
            .collect()
    }

    pub fn by_day_type() -> Vec<Self> {
        [DayType::Weekday, DayType::Weekend]
            .into_iter()
            .map(|d| Self::new(d.name(), move |r: &DayRecord| r.day_type == d))
            .collect()
    }

    /// One stratum per distinct date in `records`, labelled by ISO date.
    pub fn by_calendar_day(records: &[DayRecord]) -> Vec<Self> {
        let mut dates: Vec<_> = records.iter().map(|r| r.key.date).collect();
        dates.sort_unstable();
        dates.dedup();
        dates
            .into_iter()
            .map(|d| Self::new(d.to_string(), move |r: &DayRecord| r.key.date == d))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumEntropy {
    pub label: String,
    pub days: usize,
    /// `None` for an empty stratum.
    pub entropy: Option<f64>,
    /// Share of the stratum's days assigned to each shape id.
    pub frequencies: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EntropyReport {
    pub strata: Vec<StratumEntropy>,
}

impl EntropyReport {
    pub fn get(&self, label: &str) -> Option<&StratumEntropy> {
        self.strata.iter().find(|s| s.label == label)
    }

    pub fn entropy(&self, label: &str) -> Option<f64> {
        self.get(label).and_then(|s| s.entropy)
    }
}

fn summarize(label: &str, records: &[DayRecord], include: impl Fn(&DayRecord) -> bool) -> StratumEntropy {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for r in records.iter().filter(|r| include(r)) {
        *counts.entry(r.cluster_id).or_default() += 1;
    }
    let days: usize = counts.values().sum();
    let frequencies = counts
        .iter()
        .map(|(&c, &n)| (c, n as f64 / days as f64))
        .collect();
    StratumEntropy { label: label.to_string(), days, entropy: entropy_of_counts(counts.values()), frequencies }
}

/// Entropy of the shape-assignment distribution within each stratum.
pub fn stratified_entropy(records: &[DayRecord], strata: &[Stratum]) -> EntropyReport {
    EntropyReport {
        strata: strata
            .par_iter()
            .map(|s| summarize(&s.label, records, |r| s.contains(r)))
            .collect(),
    }
}

/// Per-household entropy over the days passing `filter`. Households with no
/// such day are absent from the result.
pub fn household_entropy(records: &[DayRecord], filter: impl Fn(&DayRecord) -> bool) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<&str, BTreeMap<usize, usize>> = BTreeMap::new();
    for r in records.iter().filter(|r| filter(r)) {
        *counts
            .entry(r.key.household_id.as_str())
            .or_default()
            .entry(r.cluster_id)
            .or_default() += 1;
    }
    counts
        .into_iter()
        .filter_map(|(h, c)| Some((h.to_string(), entropy_of_counts(c.values())?)))
        .collect()
}
