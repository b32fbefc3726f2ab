use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Profile, HOURS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    /// Minimum prominence as a fraction of the profile's maximum.
    pub prominence_fraction: f64,
    /// Minimum circular distance in hours between two retained peaks.
    pub min_separation: usize,
}

impl Default for PeakParams {
    fn default() -> Self {
        Self { prominence_fraction: 0.25, min_separation: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PeakCount {
    Single,
    Double,
    ThreePlus,
}

impl PeakCount {
    fn of(n: usize) -> Self {
        match n {
            0 | 1 => PeakCount::Single,
            2 => PeakCount::Double,
            _ => PeakCount::ThreePlus,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PeakCount::Single => "single",
            PeakCount::Double => "double",
            PeakCount::ThreePlus => "3+",
        }
    }
}

impl fmt::Display for PeakCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Time-of-day bin of an hour index (index `h` covers `h:00` to `h+1:00`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PeakBin {
    /// 23:00 to 06:00
    Night,
    /// 06:00 to 10:00
    Morning,
    /// 10:00 to 16:00
    Daytime,
    /// 16:00 to 19:00, the time-of-use peak window
    Tou,
    /// 19:00 to 23:00
    Evening,
}

impl PeakBin {
    pub fn of(hour: usize) -> Self {
        match hour % HOURS {
            6..=9 => PeakBin::Morning,
            10..=15 => PeakBin::Daytime,
            16..=18 => PeakBin::Tou,
            19..=22 => PeakBin::Evening,
            _ => PeakBin::Night,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PeakBin::Night => "night",
            PeakBin::Morning => "morning",
            PeakBin::Daytime => "daytime",
            PeakBin::Tou => "tou",
            PeakBin::Evening => "evening",
        }
    }
}

impl fmt::Display for PeakBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeTaxonomy {
    pub id: usize,
    pub peak_count: PeakCount,
    /// Retained peak hours, ascending.
    pub peak_hours: Vec<usize>,
    pub primary_hour: usize,
    pub primary_bin: PeakBin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakTaxonomy {
    pub params: PeakParams,
    pub shapes: Vec<ShapeTaxonomy>,
}

fn circular_gap(a: usize, b: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(HOURS - d)
}

/// Height of `h` above the higher of the lowest points reached walking each
/// way around the day before meeting a strictly higher value.
fn prominence(v: &Profile, h: usize) -> f64 {
    let walk = |step: usize| {
        let mut low = v[h];
        for i in 1..HOURS {
            let x = v[(h + step * i) % HOURS];
            if x > v[h] {
                break;
            }
            low = low.min(x);
        }
        low
    };
    v[h] - walk(1).max(walk(HOURS - 1))
}

fn argmax(v: &Profile) -> usize {
    let mut best = 0;
    for h in 1..HOURS {
        if v[h] > v[best] {
            best = h;
        }
    }
    best
}

/// Peak hours of one profile, treating the day as circular.
pub(crate) fn peaks(v: &Profile, params: &PeakParams) -> Vec<usize> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = params.prominence_fraction * max;
    let mut candidates: Vec<usize> = (0..HOURS)
        .filter(|&h| {
            let prev = v[(h + HOURS - 1) % HOURS];
            let next = v[(h + 1) % HOURS];
            v[h] > prev && v[h] >= next && prominence(v, h) >= floor
        })
        .collect();
    candidates.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for h in candidates {
        if kept.iter().all(|&k| circular_gap(h, k) >= params.min_separation) {
            kept.push(h);
        }
    }
    if kept.is_empty() {
        kept.push(argmax(v));
    }
    kept.sort_unstable();
    kept
}

/// Classifies each profile by number of daily peaks and the bin of its
/// global maximum (earliest hour on ties).
pub fn peak_taxonomy(profiles: &[Profile], params: PeakParams) -> PeakTaxonomy {
    let shapes = profiles
        .iter()
        .enumerate()
        .map(|(id, v)| {
            let peak_hours = peaks(v, &params);
            let primary_hour = argmax(v);
            ShapeTaxonomy {
                id,
                peak_count: PeakCount::of(peak_hours.len()),
                peak_hours,
                primary_hour,
                primary_bin: PeakBin::of(primary_hour),
            }
        })
        .collect();
    PeakTaxonomy { params, shapes }
}
