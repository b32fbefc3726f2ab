//! Synthetic corpora with planted structure.
//!
//! Every household draws its daily shape from a household-specific
//! categorical mixture over a small set of archetype shapes. The mixture's
//! entropy is planted per household (base level plus additive per-indicator
//! biases), and on warm days extra mass moves onto the designated cooling
//! archetype. A household-level baseload is added before writing kWh so that
//! de-minning has something to remove. Optional unstructured days (random
//! shapes) and bad days (missing hour / low demand) exercise truncation and
//! cleaning.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use super::{
    csv_err, write_meter_corpus, write_survey, write_weather, DayKey, HouseholdProfile, Indicator, IngestError,
    LoadDay, MeterSchema, WeatherDay,
};
use crate::{rng, Profile, HOURS};

/// Generator parameters. Parsed from flat `key=value` text; `bias.<indicator>=x`
/// plants an additive entropy shift (nats) for households with that indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub archetypes: usize,
    pub households: usize,
    pub start_date: NaiveDate,
    pub days: usize,
    /// Log-normal sigma of per-hour multiplicative shape noise.
    pub noise: f64,
    /// Extra log-odds on the cooling archetype per 10 °F above `temp_reference_f`.
    pub temp_response: f64,
    pub temp_reference_f: f64,
    /// Share of days whose shape is an unstructured random profile.
    pub outlier_fraction: f64,
    /// Share of days made unusable (missing hour or sub-0.2 kW mean).
    pub bad_day_fraction: f64,
    /// Planted household mixture entropy before indicator biases; defaults to 0.6·ln K.
    pub base_entropy: Option<f64>,
    pub entropy_sd: f64,
    pub bias: BTreeMap<Indicator, f64>,
    pub indicator_prevalence: f64,
    pub indicator_missing: f64,
    pub mean_temp_f: f64,
    pub temp_amplitude_f: f64,
    pub temp_noise_f: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            archetypes: 5,
            households: 200,
            start_date: NaiveDate::from_ymd_opt(2011, 6, 1).expect("valid date"),
            days: 90,
            noise: 0.15,
            temp_response: 1.5,
            temp_reference_f: 60.0,
            outlier_fraction: 0.0,
            bad_day_fraction: 0.0,
            base_entropy: None,
            entropy_sd: 0.1,
            bias: BTreeMap::new(),
            indicator_prevalence: 0.5,
            indicator_missing: 0.02,
            mean_temp_f: 60.0,
            temp_amplitude_f: 18.0,
            temp_noise_f: 4.0,
        }
    }
}

impl SyntheticConfig {
    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| IngestError::Config(format!("line {}: expected key=value", n + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| IngestError::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("{key}: cannot parse `{v}`"))
        }
        match key {
            "archetypes" => self.archetypes = num(key, value)?,
            "households" => self.households = num(key, value)?,
            "start_date" => self.start_date = super::parse_date(value)?,
            "days" => self.days = num(key, value)?,
            "noise" => self.noise = num(key, value)?,
            "temp_response" => self.temp_response = num(key, value)?,
            "temp_reference_f" => self.temp_reference_f = num(key, value)?,
            "outlier_fraction" => self.outlier_fraction = num(key, value)?,
            "bad_day_fraction" => self.bad_day_fraction = num(key, value)?,
            "base_entropy" => self.base_entropy = Some(num(key, value)?),
            "entropy_sd" => self.entropy_sd = num(key, value)?,
            "indicator_prevalence" => self.indicator_prevalence = num(key, value)?,
            "indicator_missing" => self.indicator_missing = num(key, value)?,
            "mean_temp_f" => self.mean_temp_f = num(key, value)?,
            "temp_amplitude_f" => self.temp_amplitude_f = num(key, value)?,
            "temp_noise_f" => self.temp_noise_f = num(key, value)?,
            _ => {
                let Some(name) = key.strip_prefix("bias.") else {
                    return Err(format!("unknown key `{key}`"));
                };
                let ind: Indicator = name.parse()?;
                self.bias.insert(ind, num(key, value)?);
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let fail = |m: &str| Err(IngestError::Config(m.to_string()));
        if self.archetypes < 2 {
            return fail("archetypes must be at least 2");
        }
        if self.days == 0 {
            return fail("empty date range (days = 0)");
        }
        if self.households == 0 {
            return fail("households must be at least 1");
        }
        for (name, v) in [
            ("outlier_fraction", self.outlier_fraction),
            ("bad_day_fraction", self.bad_day_fraction),
            ("indicator_prevalence", self.indicator_prevalence),
            ("indicator_missing", self.indicator_missing),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return fail(&format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.noise >= 0.0 && self.entropy_sd >= 0.0 && self.temp_noise_f >= 0.0) {
            return fail("noise parameters must be non-negative");
        }
        Ok(())
    }

    /// Canonical `key=value` rendering; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k}={v}\n"));
        kv("archetypes", self.archetypes.to_string());
        kv("households", self.households.to_string());
        kv("start_date", self.start_date.to_string());
        kv("days", self.days.to_string());
        kv("noise", self.noise.to_string());
        kv("temp_response", self.temp_response.to_string());
        kv("temp_reference_f", self.temp_reference_f.to_string());
        kv("outlier_fraction", self.outlier_fraction.to_string());
        kv("bad_day_fraction", self.bad_day_fraction.to_string());
        if let Some(b) = self.base_entropy {
            kv("base_entropy", b.to_string());
        }
        kv("entropy_sd", self.entropy_sd.to_string());
        kv("indicator_prevalence", self.indicator_prevalence.to_string());
        kv("indicator_missing", self.indicator_missing.to_string());
        kv("mean_temp_f", self.mean_temp_f.to_string());
        kv("temp_amplitude_f", self.temp_amplitude_f.to_string());
        kv("temp_noise_f", self.temp_noise_f.to_string());
        for (ind, b) in &self.bias {
            kv(&format!("bias.{ind}"), b.to_string());
        }
        out
    }

    fn base_entropy(&self) -> f64 {
        self.base_entropy
            .unwrap_or(0.6 * (self.archetypes as f64).ln())
    }
}

/// Ground-truth label of one generated household-day.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRow {
    pub key: DayKey,
    /// `None` for unstructured (outlier) days.
    pub archetype: Option<usize>,
    pub bad: bool,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub config: SyntheticConfig,
    pub seed: u64,
    pub archetypes: Vec<Profile>,
    /// Index of the archetype that gains mass on warm days.
    pub cooling_archetype: usize,
    pub meter: Vec<LoadDay>,
    pub weather: Vec<WeatherDay>,
    pub survey: Vec<HouseholdProfile>,
    pub truth: Vec<TruthRow>,
    /// Planted mixture entropy (nats) per household, before temperature modulation.
    pub planted_entropy: BTreeMap<String, f64>,
}

impl SyntheticCorpus {
    /// Writes `meter.csv` (wide), `weather.csv`, `survey.csv` and `truth.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), IngestError> {
        std::fs::create_dir_all(dir).map_err(|source| IngestError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_meter_corpus(&dir.join("meter.csv"), &self.meter, MeterSchema::Wide)?;
        write_weather(&dir.join("weather.csv"), &self.weather)?;
        write_survey(&dir.join("survey.csv"), &self.survey)?;
        write_truth(&dir.join("truth.csv"), &self.truth)
    }
}

/// `household_id,date,archetype_id`; unstructured days have an empty archetype.
pub fn write_truth(path: &Path, truth: &[TruthRow]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["household_id", "date", "archetype_id"])
        .map_err(csv_err(path))?;
    for t in truth {
        let arch = t.archetype.map(|a| a.to_string()).unwrap_or_default();
        w.write_record([t.key.household_id.as_str(), &t.key.date.to_string(), &arch])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

// (peak clock hours, bump width in hours); entry 0 is the cooling archetype.
const LIBRARY: [(&[usize], f64); 8] = [
    (&[17], 1.6),
    (&[7], 1.2),
    (&[12], 1.4),
    (&[1], 1.2),
    (&[21], 1.2),
    (&[7, 20], 1.0),
    (&[7, 13, 20], 0.9),
    (&[11, 22], 1.0),
];

fn circular_gap(a: usize, b: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(HOURS - d)
}

/// Sum of circular Gaussian bumps, floored at 2% of the peak so quiet hours are exactly zero.
pub fn bump_shape(peaks: &[usize], width: f64) -> Profile {
    let mut v = [0.0; HOURS];
    for (h, x) in v.iter_mut().enumerate() {
        for &p in peaks {
            let d = circular_gap(h, p) as f64;
            *x += (-0.5 * (d / width).powi(2)).exp();
        }
    }
    let max = v.iter().cloned().fold(0.0, f64::max);
    let floor = 0.02 * max;
    for x in v.iter_mut() {
        *x = (*x - floor).max(0.0);
    }
    let total: f64 = v.iter().sum();
    v.map(|x| x / total)
}

/// Peak hours used to build each archetype (ground truth for taxonomy tests).
pub fn archetype_peaks(k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = rng::stream(seed, 0xA5C4);
    (0..k)
        .map(|i| {
            if let Some((peaks, _)) = LIBRARY.get(i) {
                peaks.to_vec()
            } else {
                vec![rng.random_range(0..HOURS)]
            }
        })
        .collect()
}

fn build_archetypes(k: usize, seed: u64) -> Vec<Profile> {
    archetype_peaks(k, seed)
        .iter()
        .enumerate()
        .map(|(i, peaks)| bump_shape(peaks, LIBRARY.get(i).map_or(1.3, |(_, w)| *w)))
        .collect()
}

fn entropy_of(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

fn ranked_mixture(ranks: &[usize], lambda: f64) -> Vec<f64> {
    let w: Vec<f64> = ranks.iter().map(|&r| (-lambda * r as f64).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Mixture `p_k ∝ exp(-λ·rank_k)` whose entropy equals `target` (bisection on λ).
fn mixture_with_entropy(ranks: &[usize], target: f64) -> Vec<f64> {
    let max = (ranks.len() as f64).ln();
    if target >= max {
        return ranked_mixture(ranks, 0.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while entropy_of(&ranked_mixture(ranks, hi)) > target && hi < 1e3 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if entropy_of(&ranked_mixture(ranks, mid)) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    ranked_mixture(ranks, 0.5 * (lo + hi))
}

fn sample_categorical<R: Rng>(rng: &mut R, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (x * s).round() / s
}

fn synth_weather(cfg: &SyntheticConfig, seed: u64) -> Vec<WeatherDay> {
    let mut rng = rng::stream(seed, 0x3EA7);
    let phi: f64 = 0.6;
    let innov = cfg.temp_noise_f * (1.0 - phi * phi).sqrt();
    let mut anomaly = 0.0;
    (0..cfg.days)
        .map(|d| {
            let date = cfg.start_date + Duration::days(d as i64);
            let doy = date.ordinal() as f64;
            let z: f64 = rng.sample(StandardNormal);
            anomaly = phi * anomaly + innov * z;
            let seasonal = cfg.mean_temp_f + cfg.temp_amplitude_f * (2.0 * PI * (doy - 200.0) / 365.25).cos();
            WeatherDay { date, avg_temp_f: round_to(seasonal + anomaly, 1) }
        })
        .collect()
}

pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<SyntheticCorpus, IngestError> {
    config.validate()?;
    let k = config.archetypes;
    let archetypes = build_archetypes(k, seed);
    let weather = synth_weather(config, seed);
    let max_entropy = (k as f64).ln();

    let mut meter = Vec::with_capacity(config.households * config.days);
    let mut truth = Vec::with_capacity(config.households * config.days);
    let mut survey = Vec::with_capacity(config.households);
    let mut planted_entropy = BTreeMap::new();

    for h in 0..config.households {
        let mut rng = rng::stream(seed, 0x1000_0000 + h as u64);
        let id = format!("H{h:05}");

        let mut indicators = BTreeMap::new();
        let mut target = config.base_entropy();
        for ind in Indicator::ALL {
            let has = rng.random_bool(config.indicator_prevalence);
            if has {
                target += config.bias.get(&ind).copied().unwrap_or(0.0);
            }
            if !rng.random_bool(config.indicator_missing) {
                indicators.insert(ind, has);
            }
        }
        let z: f64 = rng.sample(StandardNormal);
        target = (target + config.entropy_sd * z).clamp(0.02, max_entropy);
        planted_entropy.insert(id.clone(), target);
        survey.push(HouseholdProfile { household_id: id.clone(), indicators });

        let mut ranks: Vec<usize> = (0..k).collect();
        ranks.shuffle(&mut rng);
        let base = mixture_with_entropy(&ranks, target);
        let log_base: Vec<f64> = base.iter().map(|p| p.ln()).collect();

        let baseload = rng.random_range(0.3..0.8);
        let scale = rng.random_range(6.0..14.0);

        for w in &weather {
            let heat = ((w.avg_temp_f - config.temp_reference_f) / 10.0).max(0.0);
            let outlier = rng.random_bool(config.outlier_fraction);
            let (shape, archetype) = if outlier {
                let mut v = [0.0; HOURS];
                for x in v.iter_mut() {
                    *x = rng.sample::<f64, _>(Exp1);
                }
                let total: f64 = v.iter().sum();
                (v.map(|x| x / total), None)
            } else {
                let mut logits = log_base.clone();
                logits[0] += config.temp_response * heat;
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
                let total: f64 = weights.iter().sum();
                let p: Vec<f64> = weights.iter().map(|x| x / total).collect();
                let a = sample_categorical(&mut rng, &p);
                let mut v = archetypes[a];
                for x in v.iter_mut() {
                    let e: f64 = rng.sample(StandardNormal);
                    *x *= (config.noise * e - 0.5 * config.noise * config.noise).exp();
                }
                let total: f64 = v.iter().sum();
                (v.map(|x| x / total), Some(a))
            };
            let daily: f64 = scale * (1.0 + 0.3 * heat) * rng.random_range(0.85..1.15);
            let mut kwh: [Option<f64>; HOURS] = shape.map(|s| Some(round_to(baseload + daily * s, 4)));

            let bad = rng.random_bool(config.bad_day_fraction);
            if bad {
                if rng.random_bool(0.5) {
                    kwh[rng.random_range(0..HOURS)] = None;
                } else {
                    kwh = shape.map(|s| Some(round_to(0.08 + 0.5 * s, 4)));
                }
            }
            let key = DayKey::new(id.clone(), w.date);
            truth.push(TruthRow { key: key.clone(), archetype, bad });
            meter.push(LoadDay::new(key, kwh));
        }
    }

    Ok(SyntheticCorpus {
        config: config.clone(),
        seed,
        archetypes,
        cooling_archetype: 0,
        meter,
        weather,
        survey,
        truth,
        planted_entropy,
    })
}
