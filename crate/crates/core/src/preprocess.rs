//! Cleaning, de-minning and normalisation of household-days.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{DayKey, LoadDay};
use crate::{rng, Profile, HOURS};

/// Days whose mean hourly demand falls below this (kW) are dropped.
pub const LOW_DEMAND_KW: f64 = 0.2;
/// Tolerance on the unit-sum invariant of a [`ShapeVector`].
pub const SHAPE_SUM_TOLERANCE: f64 = 1e-9;
/// Identifier of the subsampling algorithm, recorded in run metadata.
pub const SUBSAMPLE_ALGORITHM: &str = "rand::seq::index::sample over chacha8 (indices sorted)";

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("day {0} has no discretionary usage (flat profile)")]
    ZeroDiscretionary(DayKey),
    #[error("cannot draw {requested} shapes from a population of {population}")]
    SampleTooLarge { requested: usize, population: usize },
}

/// A de-minned, unit-sum daily profile of discretionary usage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeVector {
    pub key: DayKey,
    pub values: Profile,
    /// Raw kWh of the source day.
    pub day_total_kwh: f64,
    /// kWh left after subtracting the daily minimum from every hour.
    pub discretionary_kwh: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input: usize,
    pub missing_hours: usize,
    pub low_demand: usize,
    pub zero_discretionary: usize,
    pub retained: usize,
}

impl CleaningReport {
    pub fn dropped(&self) -> usize {
        self.missing_hours + self.low_demand + self.zero_discretionary
    }

    pub fn retention(&self) -> f64 {
        if self.input == 0 {
            0.0
        } else {
            self.retained as f64 / self.input as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verdict {
    Keep,
    MissingHours,
    LowDemand,
}

fn verdict(day: &LoadDay) -> Verdict {
    let Some(kwh) = day.readings() else {
        return Verdict::MissingHours;
    };
    let mean = kwh.iter().sum::<f64>() / HOURS as f64;
    // A float tolerance keeps a constant 0.2 kWh day on the retained side.
    if mean + 1e-12 < LOW_DEMAND_KW {
        Verdict::LowDemand
    } else {
        Verdict::Keep
    }
}

/// Drops days with a missing hour (checked first) or mean demand below 0.2 kW.
pub fn clean(days: Vec<LoadDay>) -> (Vec<LoadDay>, CleaningReport) {
    let mut report = CleaningReport { input: days.len(), ..Default::default() };
    let verdicts: Vec<Verdict> = days.par_iter().map(verdict).collect();
    let kept = days
        .into_iter()
        .zip(verdicts)
        .filter_map(|(d, v)| match v {
            Verdict::Keep => Some(d),
            Verdict::MissingHours => {
                report.missing_hours += 1;
                None
            }
            Verdict::LowDemand => {
                report.low_demand += 1;
                None
            }
        })
        .collect::<Vec<_>>();
    report.retained = kept.len();
    (kept, report)
}

/// Subtracts the daily minimum from every hour.
pub fn demin(kwh: &Profile) -> Profile {
    let min = kwh.iter().cloned().fold(f64::INFINITY, f64::min);
    kwh.map(|x| x - min)
}

/// Divides each hour by the day's discretionary total.
pub fn normalize(key: DayKey, deminned: &Profile, day_total_kwh: f64) -> Result<ShapeVector, PreprocessError> {
    let total: f64 = deminned.iter().sum();
    if !(total > 0.0) {
        return Err(PreprocessError::ZeroDiscretionary(key));
    }
    Ok(ShapeVector {
        key,
        values: deminned.map(|x| x / total),
        day_total_kwh,
        discretionary_kwh: total,
    })
}

/// Shape of a complete day, straight through de-minning and normalisation.
pub fn shape_of(day: &LoadDay) -> Option<Result<ShapeVector, PreprocessError>> {
    let kwh = day.readings()?;
    let total = kwh.iter().sum();
    Some(normalize(day.key.clone(), &demin(&kwh), total))
}

/// Cleans, de-mins and normalises a corpus. Flat days are tallied as
/// `zero_discretionary` and excluded. Output order follows input order.
pub fn prepare(days: Vec<LoadDay>) -> (Vec<ShapeVector>, CleaningReport) {
    let (kept, mut report) = clean(days);
    let results: Vec<Result<ShapeVector, PreprocessError>> = kept
        .par_iter()
        .map(|d| shape_of(d).expect("cleaned days are complete"))
        .collect();
    let mut shapes = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(s) => shapes.push(s),
            Err(_) => report.zero_discretionary += 1,
        }
    }
    report.retained = shapes.len();
    (shapes, report)
}

/// Sorted indices of a uniform draw of `n` out of `population`, without replacement.
pub fn subsample_indices(population: usize, n: usize, seed: u64) -> Result<Vec<usize>, PreprocessError> {
    if n > population {
        return Err(PreprocessError::SampleTooLarge { requested: n, population });
    }
    let mut rng = rng::rng(seed);
    let mut idx = index::sample(&mut rng, population, n).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

pub fn subsample(shapes: &[ShapeVector], n: usize, seed: u64) -> Result<Vec<ShapeVector>, PreprocessError> {
    Ok(subsample_indices(shapes.len(), n, seed)?
        .into_iter()
        .map(|i| shapes[i].clone())
        .collect())
}
