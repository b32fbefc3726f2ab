use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AnalyticsError, DayRecord};

/// Which kWh a day contributes to its shape's coverage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoverageWeight {
    #[default]
    Total,
    Discretionary,
}

impl fmt::Display for CoverageWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoverageWeight::Total => "total",
            CoverageWeight::Discretionary => "discretionary",
        })
    }
}

impl FromStr for CoverageWeight {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "total" => Ok(CoverageWeight::Total),
            "discretionary" => Ok(CoverageWeight::Discretionary),
            _ => Err(format!("expected `total` or `discretionary`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageEntry {
    pub rank: usize,
    pub cluster_id: usize,
    pub kwh: f64,
    pub share: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub entries: Vec<CoverageEntry>,
    pub total_kwh: f64,
}

impl CoverageCurve {
    /// Cumulative share covered by the top `n` shapes.
    pub fn top(&self, n: usize) -> f64 {
        match n {
            0 => 0.0,
            n => self.entries[n.min(self.entries.len()) - 1].cumulative,
        }
    }
}

/// Ranks shapes `0..k` by the kWh of their assigned days, descending (ties by
/// id), with cumulative fractions of the total.
pub fn coverage_curve(weights: impl IntoIterator<Item = (usize, f64)>, k: usize) -> Result<CoverageCurve, AnalyticsError> {
    let mut kwh = vec![0.0; k];
    for (id, w) in weights {
        *kwh.get_mut(id).ok_or(AnalyticsError::LabelOutOfRange { label: id, k })? += w;
    }
    let total: f64 = kwh.iter().sum();
    if total <= 0.0 {
        return Err(AnalyticsError::ZeroTotal);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| kwh[b].total_cmp(&kwh[a]).then(a.cmp(&b)));
    let mut cumulative = 0.0;
    let entries = order
        .into_iter()
        .enumerate()
        .map(|(rank, id)| {
            cumulative += kwh[id];
            CoverageEntry { rank: rank + 1, cluster_id: id, kwh: kwh[id], share: kwh[id] / total, cumulative: cumulative / total }
        })
        .collect();
    Ok(CoverageCurve { entries, total_kwh: total })
}

pub fn coverage_from_records(records: &[DayRecord], k: usize, weight: CoverageWeight) -> Result<CoverageCurve, AnalyticsError> {
    coverage_curve(
        records.iter().map(|r| {
            let w = match weight {
                CoverageWeight::Total => r.day_total_kwh,
                CoverageWeight::Discretionary => r.discretionary_kwh,
            };
            (r.cluster_id, w)
        }),
        k,
    )
}
