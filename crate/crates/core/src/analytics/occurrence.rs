use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::NaiveDate;
use serde::Serialize;

use super::{entropy_of_counts, AnalyticsError, DayRecord};

/// Household × day indicator of assignment to any of a set of target shapes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccurrenceMap {
    pub targets: Vec<usize>,
    /// Sorted by row sum descending, then id.
    pub households: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// `cells[h][d]`: `None` where the household has no assigned shape that day.
    pub cells: Vec<Vec<Option<bool>>>,
    pub row_sums: Vec<usize>,
    /// Share of that day's observed households hitting a target shape.
    pub column_means: Vec<Option<f64>>,
    pub daily_temp: Vec<Option<f64>>,
    /// Entropy of all shape assignments on each calendar day.
    pub daily_entropy: Vec<Option<f64>>,
}

pub fn occurrence_map(records: &[DayRecord], targets: &[usize], dict_size: usize) -> Result<OccurrenceMap, AnalyticsError> {
    if targets.is_empty() {
        return Err(AnalyticsError::EmptyTargets);
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= dict_size) {
        return Err(AnalyticsError::UnknownTarget(bad));
    }
    let target: BTreeSet<usize> = targets.iter().copied().collect();
    let dates: Vec<NaiveDate> = records.iter().map(|r| r.key.date).collect::<BTreeSet<_>>().into_iter().collect();
    let date_index: HashMap<NaiveDate, usize> = dates.iter().enumerate().map(|(i, &d)| (d, i)).collect();

    let mut rows: BTreeMap<&str, Vec<Option<bool>>> = BTreeMap::new();
    let mut day_counts: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); dates.len()];
    let mut daily_temp: Vec<Option<f64>> = vec![None; dates.len()];
    for r in records {
        let d = date_index[&r.key.date];
        rows.entry(&r.key.household_id).or_insert_with(|| vec![None; dates.len()])[d] =
            Some(target.contains(&r.cluster_id));
        *day_counts[d].entry(r.cluster_id).or_default() += 1;
        daily_temp[d] = daily_temp[d].or(r.avg_temp_f);
    }

    let mut rows: Vec<(&str, Vec<Option<bool>>, usize)> = rows
        .into_iter()
        .map(|(h, cells)| {
            let sum = cells.iter().filter(|c| **c == Some(true)).count();
            (h, cells, sum)
        })
        .collect();
    rows.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(b.0)));

    let column_means = (0..dates.len())
        .map(|d| {
            let (hits, seen) = rows.iter().fold((0usize, 0usize), |(h, s), row| match row.1[d] {
                Some(true) => (h + 1, s + 1),
                Some(false) => (h, s + 1),
                None => (h, s),
            });
            (seen > 0).then(|| hits as f64 / seen as f64)
        })
        .collect();
    let daily_entropy = day_counts.iter().map(|c| entropy_of_counts(c.values())).collect();

    Ok(OccurrenceMap {
        targets: target.into_iter().collect(),
        households: rows.iter().map(|r| r.0.to_string()).collect(),
        row_sums: rows.iter().map(|r| r.2).collect(),
        cells: rows.into_iter().map(|r| r.1).collect(),
        dates,
        column_means,
        daily_temp,
        daily_entropy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{DayKey, DayType, Season};

    fn rec(h: &str, day: u32, cluster: usize) -> DayRecord {
        let date = NaiveDate::from_ymd_opt(2011, 7, day).unwrap();
        DayRecord {
            key: DayKey::new(h, date),
            cluster_id: cluster,
            day_total_kwh: 1.0,
            discretionary_kwh: 1.0,
            season: Season::of(date),
            day_type: DayType::of(date),
            avg_temp_f: Some(70.0 + day as f64),
        }
    }

    #[test]
    fn all_targets_give_all_ones() {
        let records = vec![rec("A", 1, 0), rec("A", 2, 1), rec("B", 1, 2), rec("B", 2, 0)];
        let m = occurrence_map(&records, &[0, 1, 2], 3).unwrap();
        assert!(m.cells.iter().flatten().all(|c| *c == Some(true)));
        assert_eq!(m.column_means, vec![Some(1.0), Some(1.0)]);
        assert_eq!(m.daily_temp, vec![Some(71.0), Some(72.0)]);
        assert_eq!(m.daily_entropy[0], Some(2f64.ln()));
    }

    #[test]
    fn rows_sorted_by_hits() {
        let records = vec![rec("A", 1, 1), rec("B", 1, 0), rec("B", 2, 0), rec("C", 2, 0)];
        let m = occurrence_map(&records, &[0], 2).unwrap();
        assert_eq!(m.households, vec!["B", "C", "A"]);
        assert_eq!(m.row_sums, vec![2, 1, 0]);
        assert_eq!(m.cells[1], vec![None, Some(true)]);
        assert_eq!(m.column_means, vec![Some(0.5), Some(1.0)]);
    }

    #[test]
    fn bad_targets() {
        let records = vec![rec("A", 1, 0)];
        assert_eq!(occurrence_map(&records, &[], 2), Err(AnalyticsError::EmptyTargets));
        assert_eq!(occurrence_map(&records, &[0, 5], 2), Err(AnalyticsError::UnknownTarget(5)));
    }
}
