use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{AnalyticsError, DayRecord, Stratum};
use crate::ingest::WeatherDay;

/// How temperature bin edges are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QuartileMode {
    /// Quartiles of the temperatures on the selected dates.
    Empirical,
    /// Three fixed, strictly increasing edges in °F.
    Fixed([f64; 3]),
}

impl fmt::Display for QuartileMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuartileMode::Empirical => f.write_str("empirical"),
            QuartileMode::Fixed([a, b, c]) => write!(f, "fixed:{a},{b},{c}"),
        }
    }
}

impl FromStr for QuartileMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "empirical" {
            return Ok(QuartileMode::Empirical);
        }
        let rest = s
            .strip_prefix("fixed:")
            .ok_or_else(|| format!("expected `empirical` or `fixed:a,b,c`, got `{s}`"))?;
        let edges: Vec<f64> = rest
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad edge `{p}`: {e}")))
            .collect::<Result<_, _>>()?;
        let edges: [f64; 3] = edges
            .try_into()
            .map_err(|v: Vec<f64>| format!("expected 3 edges, got {}", v.len()))?;
        if !(edges[0] < edges[1] && edges[1] < edges[2]) || edges.iter().any(|e| !e.is_finite()) {
            return Err(format!("edges must be finite and strictly increasing: {rest}"));
        }
        Ok(QuartileMode::Fixed(edges))
    }
}

/// Four temperature bins over a fixed set of dates. Bins are left-closed:
/// bin `i` holds `edges[i-1] <= t < edges[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemperatureBins {
    pub edges: [f64; 3],
    pub mode: QuartileMode,
    /// Date to bin index for every selected date with weather.
    pub date_bins: HashMap<NaiveDate, usize>,
}

impl TemperatureBins {
    pub fn bin_of(&self, t: f64) -> usize {
        self.edges.iter().take_while(|&&e| t >= e).count()
    }

    pub fn label(i: usize) -> String {
        format!("T{}", i + 1)
    }

    /// Strata `T1`..`T4` restricted to the selected dates.
    pub fn strata(&self) -> Vec<Stratum> {
        (0..4)
            .map(|i| {
                let dates: HashSet<NaiveDate> =
                    self.date_bins.iter().filter(|(_, &b)| b == i).map(|(&d, _)| d).collect();
                Stratum::new(Self::label(i), move |r: &DayRecord| dates.contains(&r.key.date))
            })
            .collect()
    }
}

/// Splits `dates` into four bins by their daily average temperature.
///
/// Empirical edges are the order statistics at `j·n/4` (j = 1..3) of the
/// sorted temperatures. Every date must have a weather record.
pub fn temperature_quartiles(
    weather: &[WeatherDay],
    dates: &[NaiveDate],
    mode: QuartileMode,
) -> Result<TemperatureBins, AnalyticsError> {
    let temps: HashMap<NaiveDate, f64> = weather.iter().map(|w| (w.date, w.avg_temp_f)).collect();
    let mut unique: Vec<NaiveDate> = dates.to_vec();
    unique.sort_unstable();
    unique.dedup();
    let mut values = Vec::with_capacity(unique.len());
    for d in &unique {
        values.push(*temps.get(d).ok_or(AnalyticsError::MissingWeather(*d))?);
    }
    let edges = match &mode {
        QuartileMode::Fixed(e) => {
            if !(e[0] < e[1] && e[1] < e[2]) {
                return Err(AnalyticsError::BadEdges(e.to_vec()));
            }
            *e
        }
        QuartileMode::Empirical => {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let mut distinct = sorted.clone();
            distinct.dedup();
            if distinct.len() < 4 {
                return Err(AnalyticsError::TooFewTemperatures(distinct.len()));
            }
            let n = sorted.len();
            [1, 2, 3].map(|j| sorted[j * n / 4])
        }
    };
    let mut bins = TemperatureBins { edges, mode, date_bins: HashMap::new() };
    bins.date_bins = unique.iter().zip(&values).map(|(&d, &t)| (d, bins.bin_of(t))).collect();
    Ok(bins)
}
