//! Load-shape dictionaries for hourly residential smart-meter data.
//!
//! The crate turns raw household-days (24 hourly kWh readings) into
//! de-minned, unit-sum load shapes, clusters them with threshold-driven
//! adaptive k-means, consolidates the clusters by greedy centroid merging,
//! truncates the result into a compact dictionary under a violation budget,
//! and measures load-shape variability with Shannon entropy over temporal,
//! meteorological and household strata.
//!
//! Stages map onto modules:
//!
//! - [`ingest`]: meter / weather / survey readers and the synthetic corpus generator
//! - [`preprocess`]: cleaning, de-minning, normalisation, subsampling
//! - [`kmeans`]: RSE, Lloyd iterations, adaptive splitting, hierarchical merging
//! - [`dictionary`]: iterative truncation, nearest-shape assignment, persistence
//! - [`analytics`]: entropy, Davies-Bouldin, coverage, peak taxonomy, bootstrap deltas
//! - [`pipeline`]: staged, resumable orchestration behind the CLI

pub mod analytics;
pub mod dictionary;
pub mod ingest;
pub mod kmeans;
pub mod pipeline;
pub mod preprocess;
pub(crate) mod rng;

/// Hourly slots per household-day.
pub const HOURS: usize = 24;

/// A 24-hour profile; index `i` covers clock hour `[i, i+1)`.
pub type Profile = [f64; HOURS];

pub use dictionary::{Assignment, ClusterDictionary};
pub use ingest::{DayKey, HouseholdProfile, Indicator, LoadDay, WeatherDay};
pub use kmeans::{Centroid, ClusterModel};
pub use preprocess::ShapeVector;

/// Squared Euclidean distance between two profiles.
#[inline]
pub fn squared_distance(a: &Profile, b: &Profile) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
