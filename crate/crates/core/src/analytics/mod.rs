//! Metrics over assigned household-days: entropy by stratum, household
//! entropy and characteristic deltas, Davies-Bouldin index, kWh coverage,
//! peak taxonomy and occurrence maps.

mod coverage;
mod dbi;
mod delta;
mod entropy;
mod occurrence;
mod taxonomy;
mod temperature;

use std::collections::HashMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::Assignment;
use crate::ingest::{DayKey, DayType, Indicator, Season, WeatherDay};
use crate::preprocess::ShapeVector;

pub use coverage::{coverage_curve, coverage_from_records, CoverageCurve, CoverageEntry, CoverageWeight};
pub use dbi::davies_bouldin;
pub use delta::{characteristic_entropy_delta, BootstrapParams, EntropyDelta};
pub use entropy::{
    entropy, entropy_of_counts, household_entropy, stratified_entropy, EntropyReport, Stratum, StratumEntropy,
};
pub use occurrence::{occurrence_map, OccurrenceMap};
pub use taxonomy::{peak_taxonomy, PeakBin, PeakCount, PeakParams, PeakTaxonomy, ShapeTaxonomy};
pub use temperature::{temperature_quartiles, QuartileMode, TemperatureBins};

/// Tolerance on the unit-sum check of a categorical distribution.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("frequencies do not form a distribution (sum {sum})")]
    NotADistribution { sum: f64 },
    #[error("need at least 4 distinct temperatures for quartiles, found {0}")]
    TooFewTemperatures(usize),
    #[error("no weather record for {0}")]
    MissingWeather(NaiveDate),
    #[error("temperature bin edges must be strictly increasing: {0:?}")]
    BadEdges(Vec<f64>),
    #[error("indicator {0} is unknown for every household")]
    IndicatorAbsent(Indicator),
    #[error("indicator {indicator}: {side} group has {n} households, need at least 2")]
    GroupTooSmall { indicator: Indicator, side: &'static str, n: usize },
    #[error("Davies-Bouldin index needs at least 2 clusters, found {0}")]
    TooFewClusters(usize),
    #[error("cluster {0} has no members")]
    EmptyCluster(usize),
    #[error("centroids {0} and {1} coincide")]
    CoincidentCentroids(usize, usize),
    #[error("label {label} out of range for {k} centroids")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("total kWh is zero")]
    ZeroTotal,
    #[error("target set is empty")]
    EmptyTargets,
    #[error("target shape {0} is not in the dictionary")]
    UnknownTarget(usize),
}

/// An assigned household-day joined with its calendar and weather context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub key: DayKey,
    pub cluster_id: usize,
    pub day_total_kwh: f64,
    pub discretionary_kwh: f64,
    pub season: Season,
    pub day_type: DayType,
    pub avg_temp_f: Option<f64>,
}

/// Joins assignments with the kWh of their source shapes and the day's weather.
/// Assignments without a matching shape are dropped.
pub fn join_records(assignments: &[Assignment], shapes: &[ShapeVector], weather: &[WeatherDay]) -> Vec<DayRecord> {
    let kwh: HashMap<&DayKey, (f64, f64)> = shapes
        .iter()
        .map(|s| (&s.key, (s.day_total_kwh, s.discretionary_kwh)))
        .collect();
    let temps: HashMap<NaiveDate, f64> = weather.iter().map(|w| (w.date, w.avg_temp_f)).collect();
    assignments
        .iter()
        .filter_map(|a| {
            let &(total, disc) = kwh.get(&a.key)?;
            Some(DayRecord {
                key: a.key.clone(),
                cluster_id: a.cluster_id,
                day_total_kwh: total,
                discretionary_kwh: disc,
                season: Season::of(a.key.date),
                day_type: DayType::of(a.key.date),
                avg_temp_f: temps.get(&a.key.date).copied(),
            })
        })
        .collect()
}
