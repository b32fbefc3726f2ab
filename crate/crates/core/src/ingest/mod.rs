//! Input corpora: hourly meter readings, daily weather and the household survey.
//!
//! All readers are single-pass over UTF-8 CSV. Malformed rows are rejected
//! with their line number and collected in [`Parsed::rejected`]; structural
//! problems (unreadable file, wrong header, duplicate keys) are hard errors.

mod meter;
mod survey;
pub mod synth;
mod weather;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::HOURS;

pub use meter::{read_meter_corpus, write_meter_corpus, MeterSchema};
pub use survey::{read_survey, write_survey};
pub use synth::{generate_synthetic, write_truth, SyntheticConfig, SyntheticCorpus, TruthRow};
pub use weather::{read_weather, write_weather};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: header mismatch, expected `{expected}`, found `{found}`")]
    HeaderMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: line {line}: duplicate key {key}")]
    Duplicate {
        path: PathBuf,
        line: u64,
        key: String,
    },
    #[error("{path}: unknown survey indicator `{column}`; allowed: household_id, {allowed}")]
    UnknownIndicator {
        path: PathBuf,
        column: String,
        allowed: String,
    },
    #[error("invalid generator config: {0}")]
    Config(String),
}

/// A row that could not be parsed, with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct RowDiagnostic {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Records accepted by a reader plus the rows it rejected.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub rejected: Vec<RowDiagnostic>,
}

/// Identity of a household-day.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DayKey {
    pub household_id: String,
    pub date: NaiveDate,
}

impl DayKey {
    pub fn new(household_id: impl Into<String>, date: NaiveDate) -> Self {
        Self {
            household_id: household_id.into(),
            date,
        }
    }
}

impl fmt::Display for DayKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.household_id, self.date)
    }
}

/// One household-day of hourly kWh readings. `None` marks a missing slot.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadDay {
    pub key: DayKey,
    pub kwh: [Option<f64>; HOURS],
}

impl LoadDay {
    pub fn new(key: DayKey, kwh: [Option<f64>; HOURS]) -> Self {
        Self { key, kwh }
    }

    pub fn complete(household_id: impl Into<String>, date: NaiveDate, kwh: [f64; HOURS]) -> Self {
        Self {
            key: DayKey::new(household_id, date),
            kwh: kwh.map(Some),
        }
    }

    /// All 24 readings, or `None` if any slot is missing.
    pub fn readings(&self) -> Option<[f64; HOURS]> {
        let mut out = [0.0; HOURS];
        for (o, v) in out.iter_mut().zip(&self.kwh) {
            *o = (*v)?;
        }
        Some(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherDay {
    pub date: NaiveDate,
    /// Daily average outdoor dry-bulb temperature, °F.
    pub avg_temp_f: f64,
}

/// Closed vocabulary of binary survey indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    LowIncome,
    ChronicallyIll,
    Elderly,
    ChildrenInHome,
    CollegeDegree,
    WorkFullTime,
    WorkFromHome,
    SingleFamilyHome,
    ElectricDryer,
    CentralAc,
    RoomAc,
    ProgrammableThermostat,
}

impl Indicator {
    pub const ALL: [Indicator; 12] = [
        Indicator::LowIncome,
        Indicator::ChronicallyIll,
        Indicator::Elderly,
        Indicator::ChildrenInHome,
        Indicator::CollegeDegree,
        Indicator::WorkFullTime,
        Indicator::WorkFromHome,
        Indicator::SingleFamilyHome,
        Indicator::ElectricDryer,
        Indicator::CentralAc,
        Indicator::RoomAc,
        Indicator::ProgrammableThermostat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Indicator::LowIncome => "low_income",
            Indicator::ChronicallyIll => "chronically_ill",
            Indicator::Elderly => "elderly",
            Indicator::ChildrenInHome => "children_in_home",
            Indicator::CollegeDegree => "college_degree",
            Indicator::WorkFullTime => "work_full_time",
            Indicator::WorkFromHome => "work_from_home",
            Indicator::SingleFamilyHome => "single_family_home",
            Indicator::ElectricDryer => "electric_dryer",
            Indicator::CentralAc => "central_ac",
            Indicator::RoomAc => "room_ac",
            Indicator::ProgrammableThermostat => "programmable_thermostat",
        }
    }

    pub fn vocabulary() -> String {
        Self::ALL.map(Indicator::name).join(", ")
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Indicator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|i| i.name() == s)
            .ok_or_else(|| format!("unknown indicator `{s}`"))
    }
}

/// Survey answers for one household. Indicators missing from the map are unknown.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HouseholdProfile {
    pub household_id: String,
    pub indicators: BTreeMap<Indicator, bool>,
}

impl HouseholdProfile {
    pub fn get(&self, indicator: Indicator) -> Option<bool> {
        self.indicators.get(&indicator).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Summer,
    Autumn,
    Winter,
    Spring,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Summer, Season::Autumn, Season::Winter, Season::Spring];

    /// Meteorological seasons: Jun–Aug summer, Sep–Nov autumn, Dec–Feb winter, Mar–May spring.
    pub fn of(date: NaiveDate) -> Season {
        match date.month() {
            6..=8 => Season::Summer,
            9..=11 => Season::Autumn,
            12 | 1 | 2 => Season::Winter,
            _ => Season::Spring,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Season::Summer => "summer",
            Season::Autumn => "autumn",
            Season::Winter => "winter",
            Season::Spring => "spring",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayType {
    Weekday,
    Weekend,
}

impl DayType {
    /// Saturday and Sunday are weekend days; holidays are not special-cased.
    pub fn of(date: NaiveDate) -> DayType {
        match date.weekday() {
            Weekday::Sat | Weekday::Sun => DayType::Weekend,
            _ => DayType::Weekday,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DayType::Weekday => "weekday",
            DayType::Weekend => "weekend",
        }
    }
}

pub(crate) fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("bad date `{s}`: {e}"))
}

pub(crate) fn check_header(
    path: &std::path::Path,
    found: &csv::StringRecord,
    expected: &[&str],
) -> Result<(), IngestError> {
    let matches = found.len() == expected.len()
        && found.iter().zip(expected).all(|(f, e)| f.trim() == *e);
    if matches {
        Ok(())
    } else {
        Err(IngestError::HeaderMismatch {
            path: path.to_path_buf(),
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        })
    }
}

pub(crate) fn open_reader(path: &std::path::Path) -> Result<csv::Reader<std::fs::File>, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file))
}

pub(crate) fn csv_err(path: &std::path::Path) -> impl Fn(csv::Error) -> IngestError + '_ {
    move |source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    }
}
