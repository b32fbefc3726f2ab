use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use loadshape::analytics::{
    characteristic_entropy_delta, coverage_curve, davies_bouldin, entropy, household_entropy, occurrence_map,
    peak_taxonomy, stratified_entropy, temperature_quartiles, BootstrapParams, DayRecord, PeakCount, PeakParams,
    QuartileMode, Stratum,
};
use loadshape::ingest::synth::{archetype_peaks, bump_shape};
use loadshape::ingest::{generate_synthetic, DayType, Season, SyntheticConfig, SyntheticCorpus};
use loadshape::{DayKey, HouseholdProfile, Indicator, Profile, HOURS};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, StudentsT};

fn record(household: &str, date: NaiveDate, cluster_id: usize, temp: Option<f64>) -> DayRecord {
    DayRecord {
        key: DayKey::new(household, date),
        cluster_id,
        day_total_kwh: 20.0,
        discretionary_kwh: 10.0,
        season: Season::of(date),
        day_type: DayType::of(date),
        avg_temp_f: temp,
    }
}

/// Records labelled with the generator's archetypes instead of fitted clusters.
fn truth_records(corpus: &SyntheticCorpus) -> Vec<DayRecord> {
    let temps: HashMap<NaiveDate, f64> = corpus.weather.iter().map(|w| (w.date, w.avg_temp_f)).collect();
    corpus
        .truth
        .iter()
        .filter(|t| !t.bad)
        .filter_map(|t| {
            let a = t.archetype?;
            Some(record(&t.key.household_id, t.key.date, a, temps.get(&t.key.date).copied()))
        })
        .collect()
}

fn date(d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2012, 7, d).unwrap()
}

#[test]
fn uniform_entropy_is_log_k() {
    for k in [1usize, 2, 4, 16, 20, 99] {
        let h = entropy(&vec![1.0 / k as f64; k]).unwrap();
        assert!((h - (k as f64).ln()).abs() < 1e-12, "k = {k}");
    }
}

#[test]
fn household_uniform_over_twenty_shapes() {
    let records: Vec<DayRecord> = (0..60).map(|i| record("h1", date(1) + chrono::Days::new(i), i as usize % 20, None)).collect();
    let h = household_entropy(&records, |_| true);
    assert!((h["h1"] - 20f64.ln()).abs() < 1e-12);
}

#[test]
fn fixed_edges_put_a_hot_day_in_the_top_bin() {
    let weather = vec![loadshape::WeatherDay { date: date(3), avg_temp_f: 78.0 }];
    let bins = temperature_quartiles(&weather, &[date(3)], QuartileMode::Fixed([68.0, 71.0, 76.0])).unwrap();
    assert_eq!(bins.date_bins[&date(3)], 3);
}

#[test]
fn empirical_edges_are_order_statistics() {
    let corpus = generate_synthetic(&SyntheticConfig { households: 2, days: 365, ..Default::default() }, 3).unwrap();
    let dates: Vec<NaiveDate> = corpus.weather.iter().map(|w| w.date).collect();
    let bins = temperature_quartiles(&corpus.weather, &dates, QuartileMode::Empirical).unwrap();
    let n = dates.len();
    let temps: Vec<f64> = corpus.weather.iter().map(|w| w.avg_temp_f).collect();
    // edge j is the order statistic at j·n/4: at most that many days fall
    // below it and every tie at the edge lands in the upper bin
    for (j, e) in bins.edges.iter().enumerate() {
        let below = temps.iter().filter(|&&t| t < *e).count();
        let at_most = temps.iter().filter(|&&t| t <= *e).count();
        assert!(below <= (j + 1) * n / 4 && (j + 1) * n / 4 < at_most);
    }
    let mut sizes = [0usize; 4];
    for b in bins.date_bins.values() {
        sizes[*b] += 1;
    }
    assert!(sizes.iter().all(|&s| s.abs_diff(n / 4) <= 5), "{sizes:?}");
}

#[test]
fn entropy_falls_across_temperature_quartiles() {
    let cfg = SyntheticConfig { households: 150, days: 365, temp_response: 3.0, temp_reference_f: 65.0, ..Default::default() };
    let corpus = generate_synthetic(&cfg, 8).unwrap();
    let records = truth_records(&corpus);
    let dates: Vec<NaiveDate> = corpus.weather.iter().map(|w| w.date).collect();
    let bins = temperature_quartiles(&corpus.weather, &dates, QuartileMode::Empirical).unwrap();
    let report = stratified_entropy(&records, &bins.strata());
    let h: Vec<f64> = (0..4).map(|i| report.entropy(&format!("T{}", i + 1)).unwrap()).collect();
    assert!(h.windows(2).all(|w| w[0] > w[1]), "{h:?}");
    assert!(h[0] <= (cfg.archetypes as f64).ln());
}

#[test]
fn strata_that_partition_the_days_cover_them_all() {
    let corpus = generate_synthetic(&SyntheticConfig { households: 20, days: 200, ..Default::default() }, 2).unwrap();
    let records = truth_records(&corpus);
    let report = stratified_entropy(&records, &Stratum::by_season());
    let total: usize = report.strata.iter().map(|s| s.days).sum();
    assert_eq!(total, records.len());
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

#[test]
fn cooling_shape_occurrence_tracks_temperature() {
    let cfg = SyntheticConfig { households: 100, days: 120, temp_response: 2.0, ..Default::default() };
    let corpus = generate_synthetic(&cfg, 14).unwrap();
    let records = truth_records(&corpus);
    let map = occurrence_map(&records, &[corpus.cooling_archetype], cfg.archetypes).unwrap();
    assert_eq!(map.households.len(), 100);
    assert!(map.row_sums.windows(2).all(|w| w[0] >= w[1]));
    let (x, y): (Vec<f64>, Vec<f64>) = map
        .column_means
        .iter()
        .zip(&map.daily_temp)
        .filter_map(|(m, t)| Some(((*t)?, (*m)?)))
        .unzip();
    let r = pearson(&x, &y);
    let n = x.len() as f64;
    let t = r * ((n - 2.0) / (1.0 - r * r)).sqrt();
    let p = 1.0 - StudentsT::new(0.0, 1.0, n - 2.0).unwrap().cdf(t);
    assert!(r > 0.0 && p < 0.01, "r = {r}, p = {p}");
}

#[test]
fn taxonomy_recovers_planted_peaks() {
    let peaks = archetype_peaks(8, 0);
    let widths = [1.6, 1.2, 1.4, 1.2, 1.2, 1.0, 0.9, 1.0];
    let shapes: Vec<Profile> = peaks.iter().zip(widths).map(|(p, w)| bump_shape(p, w)).collect();
    let tax = peak_taxonomy(&shapes, PeakParams::default());
    for (s, planted) in tax.shapes.iter().zip(&peaks) {
        let mut want = planted.clone();
        want.sort_unstable();
        assert_eq!(s.peak_hours, want, "shape {}", s.id);
        let count = match want.len() {
            1 => PeakCount::Single,
            2 => PeakCount::Double,
            _ => PeakCount::ThreePlus,
        };
        assert_eq!(s.peak_count, count);
        assert!(want.contains(&s.primary_hour));
    }
    // the cooling archetype peaks in the time-of-use window
    assert_eq!(tax.shapes[0].primary_bin.name(), "tou");
}

fn profiles(n: usize) -> Vec<HouseholdProfile> {
    (0..n)
        .map(|i| HouseholdProfile {
            household_id: format!("h{i:04}"),
            indicators: [(Indicator::Elderly, i % 2 == 0)].into_iter().collect(),
        })
        .collect()
}

fn interval_width(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.2).unwrap();
    let ent: BTreeMap<String, f64> = (0..n)
        .map(|i| (format!("h{i:04}"), 1.0 - if i % 2 == 0 { 0.3 } else { 0.0 } + noise.sample(&mut rng)))
        .collect();
    let params = BootstrapParams { resamples: 2000, seed, ..Default::default() };
    let d = characteristic_entropy_delta(&ent, &profiles(n), Indicator::Elderly, &params).unwrap();
    assert!(d.ci_low <= d.delta && d.delta <= d.ci_high);
    d.ci_high - d.ci_low
}

#[test]
fn bootstrap_interval_shrinks_with_more_households() {
    let small = interval_width(40, 1);
    let large = interval_width(640, 1);
    // width scales like 1/sqrt(n): a 16x larger sample should be about 4x tighter
    assert!(large < small / 2.5, "{small} vs {large}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn entropy_stays_within_bounds(w in prop::collection::vec(0.0f64..1.0, 1..120)) {
        let total: f64 = w.iter().sum();
        prop_assume!(total > 1e-9);
        let p: Vec<f64> = w.iter().map(|x| x / total).collect();
        let h = entropy(&p).unwrap();
        prop_assert!(h >= -1e-12);
        prop_assert!(h <= (p.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn coverage_is_monotone_concave_and_ends_at_one(w in prop::collection::vec(0.0f64..100.0, 1..60)) {
        prop_assume!(w.iter().sum::<f64>() > 0.0);
        let curve = coverage_curve(w.iter().copied().enumerate(), w.len()).unwrap();
        let c: Vec<f64> = curve.entries.iter().map(|e| e.cumulative).collect();
        prop_assert!((c[c.len() - 1] - 1.0).abs() < 1e-9);
        prop_assert!(c.windows(2).all(|p| p[1] >= p[0]));
        let inc: Vec<f64> = curve.entries.iter().map(|e| e.share).collect();
        prop_assert!(inc.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn dbi_ignores_labels_and_translation(
        seed in 0u64..10_000,
        k in 2usize..6,
        shift in prop::array::uniform24(-5.0f64..5.0),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.3).unwrap();
        let centres: Vec<Profile> = (0..k).map(|j| std::array::from_fn(|t| (j * 3 + t % 2) as f64)).collect();
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (j, c) in centres.iter().enumerate() {
            for _ in 0..5 {
                points.push(std::array::from_fn::<f64, HOURS, _>(|t| c[t] + normal.sample(&mut rng)));
                labels.push(j);
            }
        }
        let means: Vec<Profile> = (0..k)
            .map(|j| std::array::from_fn(|t| points[j * 5..j * 5 + 5].iter().map(|p: &Profile| p[t]).sum::<f64>() / 5.0))
            .collect();
        let base = davies_bouldin(&points, &labels, &means).unwrap();

        let perm: Vec<usize> = (0..k).map(|j| (j + 1) % k).collect();
        let relabelled: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        let mut permuted = means.clone();
        for (j, m) in means.iter().enumerate() {
            permuted[perm[j]] = *m;
        }
        prop_assert!((davies_bouldin(&points, &relabelled, &permuted).unwrap() - base).abs() < 1e-9);

        let mv = |p: &Profile| std::array::from_fn::<f64, HOURS, _>(|t| p[t] + shift[t]);
        let moved: Vec<Profile> = points.iter().map(mv).collect();
        let moved_means: Vec<Profile> = means.iter().map(mv).collect();
        prop_assert!((davies_bouldin(&moved, &labels, &moved_means).unwrap() - base).abs() < 1e-9);
    }
}
