//! Resumable end-to-end runs: configuration, stage execution and the run
//! manifest.
//!
//! Each stage reads artifacts from the output directory, writes its own, and
//! records a parameter hash plus input and output digests in
//! `run_manifest.json`. A stage whose record still matches is skipped.

pub mod artifacts;
mod manifest;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use thiserror::Error;

use crate::analytics::{
    self, characteristic_entropy_delta, coverage_from_records, davies_bouldin, household_entropy, occurrence_map,
    peak_taxonomy, stratified_entropy, temperature_quartiles, BootstrapParams, CoverageWeight, PeakParams,
    QuartileMode, Stratum,
};
use crate::dictionary::{self, dictionary_digest, load_dictionary, save_dictionary};
use crate::ingest::{
    self, generate_synthetic, read_meter_corpus, read_survey, read_weather, Indicator, MeterSchema, Parsed,
    RowDiagnostic, Season, SyntheticConfig,
};
use crate::kmeans::{adaptive_kmeans, hierarchical_merge, AdaptiveParams};
use crate::preprocess::{prepare, subsample_indices};
use crate::{rng, Profile};

use artifacts::{csv_writer, finish, read_assignments, read_shapes, write_assignments, write_shapes, ModelFile};
pub use manifest::{file_digest, Manifest, StageRecord, MANIFEST_FILE};

const SUBSAMPLE_STREAM: u64 = 0x5AB5;
const BOOTSTRAP_STREAM: u64 = 0xB007;
const SHOWN_DIAGNOSTICS: usize = 20;

pub const SHAPES_CSV: &str = "shapes.csv";
pub const CLEANING_CSV: &str = "cleaning_report.csv";
pub const WEATHER_CSV: &str = "weather.csv";
pub const SURVEY_CSV: &str = "survey.csv";
pub const MODEL_JSON: &str = "model.json";
pub const DICTIONARY_JSON: &str = "dictionary.json";
pub const ASSIGNMENTS_CSV: &str = "assignments.csv";
pub const ANALYTICS_CSVS: [&str; 7] = [
    "entropy_by_stratum.csv",
    "coverage_curve.csv",
    "taxonomy.csv",
    "household_entropy.csv",
    "char_deltas.csv",
    "occurrence_map.csv",
    "dictionary_metrics.csv",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Synth,
    Ingest,
    Cluster,
    Truncate,
    Assign,
    Analyze,
}

impl Stage {
    /// Stages run by a full pipeline run, in order.
    pub const PIPELINE: [Stage; 5] = [Stage::Ingest, Stage::Cluster, Stage::Truncate, Stage::Assign, Stage::Analyze];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Cluster => "cluster",
            Stage::Truncate => "truncate",
            Stage::Assign => "assign",
            Stage::Analyze => "analyze",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Cached,
}

impl fmt::Display for StageStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageStatus::Ran => "done",
            StageStatus::Cached => "cached",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("stage `{stage}`: missing {artifact}; run `{producer}` first")]
    MissingArtifact { stage: Stage, artifact: String, producer: Stage },
    #[error("stage `{stage}`: {message}")]
    Stage { stage: Stage, message: String },
}

/// Effective parameters of a run. Parsed from flat `key=value` text; later
/// `set` calls override earlier ones.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub meter: Option<PathBuf>,
    pub weather: Option<PathBuf>,
    pub survey: Option<PathBuf>,
    pub out: PathBuf,
    pub theta: f64,
    pub merge_max_violation: f64,
    pub truncate_v: f64,
    pub sample: usize,
    pub seed: Option<u64>,
    pub k_init: usize,
    pub max_split_rounds: usize,
    pub quartiles: QuartileMode,
    pub coverage_weight: CoverageWeight,
    pub bootstrap_resamples: usize,
    pub occurrence_targets: Vec<usize>,
    pub peak: PeakParams,
    /// Season whose days feed household entropy and the characteristic
    /// deltas; `None` uses every day.
    pub household_period: Option<Season>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            meter: None,
            weather: None,
            survey: None,
            out: PathBuf::from("out"),
            theta: 0.3,
            merge_max_violation: 0.05,
            truncate_v: 0.30,
            sample: 100_000,
            seed: None,
            k_init: 10,
            max_split_rounds: 200,
            quartiles: QuartileMode::Empirical,
            coverage_weight: CoverageWeight::Total,
            bootstrap_resamples: 10_000,
            occurrence_targets: vec![0, 1, 2],
            peak: PeakParams::default(),
            household_period: Some(Season::Summer),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, PipelineError>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| PipelineError::Config(format!("{key}: cannot parse `{value}`: {e}")))
}

impl RunConfig {
    pub const KEYS: [&'static str; 18] = [
        "meter",
        "weather",
        "survey",
        "out",
        "theta",
        "merge_violation",
        "truncate_violation",
        "sample",
        "seed",
        "k_init",
        "split_rounds",
        "quartiles",
        "coverage_weight",
        "bootstrap_resamples",
        "occurrence_targets",
        "peak_prominence",
        "peak_separation",
        "household_period",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let path = || Some(PathBuf::from(value.trim()));
        match key {
            "meter" => self.meter = path(),
            "weather" => self.weather = path(),
            "survey" => self.survey = path(),
            "out" => self.out = PathBuf::from(value.trim()),
            "theta" => self.theta = parse(key, value)?,
            "merge_violation" => self.merge_max_violation = parse(key, value)?,
            "truncate_violation" => self.truncate_v = parse(key, value)?,
            "sample" => self.sample = parse(key, value)?,
            "seed" => self.seed = Some(parse(key, value)?),
            "k_init" => self.k_init = parse(key, value)?,
            "split_rounds" => self.max_split_rounds = parse(key, value)?,
            "quartiles" => self.quartiles = parse(key, value)?,
            "coverage_weight" => self.coverage_weight = parse(key, value)?,
            "bootstrap_resamples" => self.bootstrap_resamples = parse(key, value)?,
            "occurrence_targets" => {
                self.occurrence_targets = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_, _>>()?
            }
            "peak_prominence" => self.peak.prominence_fraction = parse(key, value)?,
            "peak_separation" => self.peak.min_separation = parse(key, value)?,
            "household_period" => {
                self.household_period = match value.trim() {
                    "all" => None,
                    v => Some(Season::ALL.into_iter().find(|s| s.name() == v).ok_or_else(|| {
                        PipelineError::Config(format!("{key}: expected `all` or a season name, got `{v}`"))
                    })?),
                }
            }
            _ => {
                return Err(PipelineError::Config(format!(
                    "unknown key `{key}`; allowed: {}",
                    Self::KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of `self`. Blank lines and `#`
    /// comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<(), PipelineError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("line {}: expected key=value, got `{line}`", n + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| PipelineError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return bad(format!("theta must be positive, got {}", self.theta));
        }
        for (name, v) in [("merge_violation", self.merge_max_violation), ("truncate_violation", self.truncate_v)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if self.sample == 0 {
            return bad("sample must be at least 1".into());
        }
        if self.k_init == 0 {
            return bad("k_init must be at least 1".into());
        }
        if self.bootstrap_resamples == 0 {
            return bad("bootstrap_resamples must be at least 1".into());
        }
        if self.occurrence_targets.is_empty() {
            return bad("occurrence_targets must name at least one shape".into());
        }
        if !(0.0..=1.0).contains(&self.peak.prominence_fraction) || self.peak.min_separation == 0 {
            return bad(format!("bad peak parameters {:?}", self.peak));
        }
        Ok(())
    }

    /// Numeric parameters, excluding paths, as `key=value` pairs.
    pub fn parameters(&self) -> BTreeMap<String, String> {
        let targets: Vec<String> = self.occurrence_targets.iter().map(usize::to_string).collect();
        [
            ("theta", self.theta.to_string()),
            ("merge_violation", self.merge_max_violation.to_string()),
            ("truncate_violation", self.truncate_v.to_string()),
            ("sample", self.sample.to_string()),
            ("seed", self.seed.map(|s| s.to_string()).unwrap_or_default()),
            ("k_init", self.k_init.to_string()),
            ("split_rounds", self.max_split_rounds.to_string()),
            ("quartiles", self.quartiles.to_string()),
            ("coverage_weight", self.coverage_weight.to_string()),
            ("bootstrap_resamples", self.bootstrap_resamples.to_string()),
            ("occurrence_targets", targets.join(",")),
            ("peak_prominence", self.peak.prominence_fraction.to_string()),
            ("peak_separation", self.peak.min_separation.to_string()),
            ("household_period", self.household_period.map_or("all", Season::name).to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    fn params_of(&self, keys: &[&str]) -> String {
        let all = self.parameters();
        keys.iter().map(|k| format!("{k}={}\n", all[*k])).collect()
    }

    fn require_seed(&self, stage: Stage) -> Result<u64, PipelineError> {
        self.seed.ok_or(PipelineError::Stage { stage, message: "a seed is required (set `seed` or --seed)".into() })
    }
}

struct Input {
    name: &'static str,
    path: PathBuf,
    producer: Option<Stage>,
}

fn report_rejected(stage: Stage, what: &str, rejected: &[RowDiagnostic]) {
    if rejected.is_empty() {
        return;
    }
    warn!("{stage}: {} {what} rows rejected", rejected.len());
    for d in rejected.iter().take(SHOWN_DIAGNOSTICS) {
        warn!("{stage}: {what}: {d}");
    }
}

fn detect_schema(path: &Path) -> Result<MeterSchema, String> {
    let mut first = String::new();
    std::fs::File::open(path)
        .and_then(|f| BufReader::new(f).read_line(&mut first))
        .map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(if first.split(',').any(|c| c.trim() == "hour") { MeterSchema::Long } else { MeterSchema::Wide })
}

/// Runs pipeline stages against one output directory.
pub struct Pipeline {
    config: RunConfig,
    manifest: Manifest,
    run_id: String,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        std::fs::create_dir_all(&config.out)
            .map_err(|e| PipelineError::Config(format!("cannot create {}: {e}", config.out.display())))?;
        let params: String = config.parameters().iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        let run_id = manifest::text_digest(&params)[..16].to_string();
        let mut manifest = Manifest::load(&config.out);
        manifest.run_id = run_id.clone();
        Ok(Self { config, manifest, run_id })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn out(&self, name: &str) -> PathBuf {
        self.config.out.join(name)
    }

    fn artifact(&self, name: &'static str, producer: Stage) -> Input {
        Input { name, path: self.out(name), producer: Some(producer) }
    }

    fn external(&self, stage: Stage, name: &'static str, path: &Option<PathBuf>) -> Result<Input, PipelineError> {
        let path = path
            .clone()
            .ok_or_else(|| PipelineError::Stage { stage, message: format!("no {name} input configured") })?;
        Ok(Input { name, path, producer: None })
    }

    /// Runs every pipeline stage in order, stopping at the first failure.
    pub fn run_all(&mut self) -> Result<Vec<(Stage, StageStatus)>, PipelineError> {
        Stage::PIPELINE
            .iter()
            .map(|&s| self.run(s).map(|status| (s, status)))
            .collect()
    }

    pub fn run(&mut self, stage: Stage) -> Result<StageStatus, PipelineError> {
        let status = match stage {
            Stage::Synth => {
                return Err(PipelineError::Config("use `run_synth` to generate a corpus".into()));
            }
            Stage::Ingest => self.ingest(),
            Stage::Cluster => self.cluster(),
            Stage::Truncate => self.truncate(),
            Stage::Assign => self.assign(),
            Stage::Analyze => self.analyze(),
        }?;
        info!("{stage}: {status}");
        Ok(status)
    }

    fn execute(
        &mut self,
        stage: Stage,
        params: String,
        inputs: Vec<Input>,
        outputs: &[&str],
        body: impl FnOnce(&Self) -> Result<(), String>,
    ) -> Result<StageStatus, PipelineError> {
        let mut digests = BTreeMap::new();
        for input in &inputs {
            if !input.path.exists() {
                return Err(match input.producer {
                    Some(producer) => PipelineError::MissingArtifact { stage, artifact: input.name.to_string(), producer },
                    None => PipelineError::Stage {
                        stage,
                        message: format!("{} input {} not found", input.name, input.path.display()),
                    },
                });
            }
            let d = file_digest(&input.path).map_err(|e| PipelineError::Stage {
                stage,
                message: format!("cannot read {}: {e}", input.path.display()),
            })?;
            digests.insert(input.name.to_string(), d);
        }
        let param_hash =
            manifest::text_digest(&format!("{stage}\n{}\n{params}", env!("CARGO_PKG_VERSION")));
        if self.manifest.is_current(stage.name(), &param_hash, &digests, &self.config.out) {
            return Ok(StageStatus::Cached);
        }
        self.manifest.stages.remove(stage.name());
        let result = body(self);
        let fail = |message: String| PipelineError::Stage { stage, message };
        if let Err(message) = result {
            for o in outputs {
                let _ = std::fs::remove_file(self.out(o));
            }
            let _ = self.manifest.save(&self.config.out);
            return Err(fail(message));
        }
        let mut produced = BTreeMap::new();
        for o in outputs {
            let p = self.out(o);
            if p.exists() {
                produced.insert(o.to_string(), file_digest(&p).map_err(|e| fail(e.to_string()))?);
            }
        }
        self.manifest
            .stages
            .insert(stage.name().to_string(), StageRecord { param_hash, inputs: digests, outputs: produced });
        self.manifest
            .save(&self.config.out)
            .map_err(|e| fail(format!("cannot write manifest: {e}")))?;
        Ok(StageStatus::Ran)
    }

    fn ingest(&mut self) -> Result<StageStatus, PipelineError> {
        let stage = Stage::Ingest;
        let mut inputs = vec![
            self.external(stage, "meter", &self.config.meter)?,
            self.external(stage, "weather", &self.config.weather)?,
        ];
        let mut outputs = vec![SHAPES_CSV, CLEANING_CSV, WEATHER_CSV];
        if self.config.survey.is_some() {
            inputs.push(self.external(stage, "survey", &self.config.survey)?);
            outputs.push(SURVEY_CSV);
        } else {
            let _ = std::fs::remove_file(self.out(SURVEY_CSV));
        }
        let paths: BTreeMap<&str, PathBuf> = inputs.iter().map(|i| (i.name, i.path.clone())).collect();
        self.execute(stage, String::new(), inputs, &outputs, |p| {
            let meter_path = &paths["meter"];
            let schema = detect_schema(meter_path)?;
            let Parsed { records, rejected } = read_meter_corpus(meter_path, schema).map_err(|e| e.to_string())?;
            report_rejected(stage, "meter", &rejected);
            let meter_rejected = rejected.len();
            let (shapes, report) = prepare(records);
            if shapes.is_empty() {
                return Err(format!("{}: no usable household-days after cleaning", meter_path.display()));
            }
            info!(
                "{stage}: {} of {} household-days retained ({} missing hours, {} low demand, {} flat)",
                report.retained, report.input, report.missing_hours, report.low_demand, report.zero_discretionary
            );
            write_shapes(&p.out(SHAPES_CSV), &shapes)?;

            let weather = read_weather(&paths["weather"]).map_err(|e| e.to_string())?;
            report_rejected(stage, "weather", &weather.rejected);
            ingest::write_weather(&p.out(WEATHER_CSV), &weather.records).map_err(|e| e.to_string())?;

            let mut survey_rejected = 0;
            if let Some(path) = paths.get("survey") {
                let survey = read_survey(path).map_err(|e| e.to_string())?;
                report_rejected(stage, "survey", &survey.rejected);
                survey_rejected = survey.rejected.len();
                ingest::write_survey(&p.out(SURVEY_CSV), &survey.records).map_err(|e| e.to_string())?;
            }

            let path = p.out(CLEANING_CSV);
            let mut w = csv_writer(&path, None)?;
            w.write_record(["metric", "value"]).map_err(|e| e.to_string())?;
            for (k, v) in [
                ("meter_rows_rejected", meter_rejected),
                ("weather_rows_rejected", weather.rejected.len()),
                ("survey_rows_rejected", survey_rejected),
                ("household_days", report.input),
                ("dropped_missing_hours", report.missing_hours),
                ("dropped_low_demand", report.low_demand),
                ("dropped_zero_discretionary", report.zero_discretionary),
                ("retained", report.retained),
            ] {
                w.write_record([k, &v.to_string()]).map_err(|e| e.to_string())?;
            }
            finish(w, &path)
        })
    }

    fn cluster(&mut self) -> Result<StageStatus, PipelineError> {
        let stage = Stage::Cluster;
        let seed = self.config.require_seed(stage)?;
        let params = self.config.params_of(&["theta", "merge_violation", "sample", "seed", "k_init", "split_rounds"]);
        let inputs = vec![self.artifact(SHAPES_CSV, Stage::Ingest)];
        self.execute(stage, params, inputs, &[MODEL_JSON], |p| {
            let c = &p.config;
            let shapes = read_shapes(&p.out(SHAPES_CSV))?;
            let n = if c.sample > shapes.len() {
                warn!("{stage}: sample {} exceeds {} available shapes; using all", c.sample, shapes.len());
                shapes.len()
            } else {
                c.sample
            };
            let idx = subsample_indices(shapes.len(), n, rng::derive(seed, SUBSAMPLE_STREAM)).map_err(|e| e.to_string())?;
            let points: Vec<Profile> = idx.iter().map(|&i| shapes[i].values).collect();
            let params = AdaptiveParams { k_init: c.k_init, max_split_rounds: c.max_split_rounds, ..AdaptiveParams::new(c.theta) };
            let model = adaptive_kmeans(&points, params, seed).map_err(|e| e.to_string())?;
            for w in &model.meta.warnings {
                warn!("{stage}: {w}");
            }
            let merged = hierarchical_merge(&points, &model, c.merge_max_violation);
            info!(
                "{stage}: {} shapes, K1 = {}, K2 = {}, violation rate {:.4}",
                points.len(),
                model.len(),
                merged.len(),
                merged.violation_rate()
            );
            ModelFile::new(&merged, shapes.len(), idx).save(&p.out(MODEL_JSON))
        })
    }

    fn truncate(&mut self) -> Result<StageStatus, PipelineError> {
        let stage = Stage::Truncate;
        let params = self.config.params_of(&["truncate_violation"]);
        let inputs = vec![self.artifact(SHAPES_CSV, Stage::Ingest), self.artifact(MODEL_JSON, Stage::Cluster)];
        self.execute(stage, params, inputs, &[DICTIONARY_JSON], |p| {
            let shapes = read_shapes(&p.out(SHAPES_CSV))?;
            let file = ModelFile::load(&p.out(MODEL_JSON))?;
            if file.population != shapes.len() || file.sample.iter().any(|&i| i >= shapes.len()) {
                return Err(format!("{MODEL_JSON} was built from a different {SHAPES_CSV}; rerun `cluster`"));
            }
            let sample: Vec<_> = file.sample.iter().map(|&i| shapes[i].clone()).collect();
            let points: Vec<Profile> = sample.iter().map(|s| s.values).collect();
            let model = file.to_model(&points)?;
            let mut dict = dictionary::truncate(&sample, &model, p.config.truncate_v).map_err(|e| e.to_string())?;
            for name in [SHAPES_CSV, MODEL_JSON] {
                let d = file_digest(&p.out(name)).map_err(|e| e.to_string())?;
                dict.provenance.input_digests.insert(name.to_string(), d);
            }
            dict.provenance.parameters = p.config.parameters();
            info!(
                "{stage}: {} shapes kept of {}, violation {:.4} -> {:.4}",
                dict.len(),
                model.len(),
                dict.provenance.violation_before_exit,
                dict.provenance.violation_after_exit
            );
            save_dictionary(&dict, &p.out(DICTIONARY_JSON)).map_err(|e| e.to_string())
        })
    }

    fn assign(&mut self) -> Result<StageStatus, PipelineError> {
        let stage = Stage::Assign;
        let inputs = vec![self.artifact(SHAPES_CSV, Stage::Ingest), self.artifact(DICTIONARY_JSON, Stage::Truncate)];
        self.execute(stage, String::new(), inputs, &[ASSIGNMENTS_CSV], |p| {
            let shapes = read_shapes(&p.out(SHAPES_CSV))?;
            let dict = load_dictionary(&p.out(DICTIONARY_JSON)).map_err(|e| e.to_string())?;
            let assignments = dictionary::assign_all(&shapes, &dict).map_err(|e| e.to_string())?;
            write_assignments(&p.out(ASSIGNMENTS_CSV), &assignments)
        })
    }

    fn analyze(&mut self) -> Result<StageStatus, PipelineError> {
        let stage = Stage::Analyze;
        let seed = self.config.require_seed(stage)?;
        let params = format!(
            "run_id={}\n{}",
            self.run_id,
            self.config.params_of(&[
                "theta",
                "seed",
                "quartiles",
                "coverage_weight",
                "bootstrap_resamples",
                "occurrence_targets",
                "peak_prominence",
                "peak_separation",
                "household_period",
            ])
        );
        let mut inputs = vec![
            self.artifact(ASSIGNMENTS_CSV, Stage::Assign),
            self.artifact(SHAPES_CSV, Stage::Ingest),
            self.artifact(WEATHER_CSV, Stage::Ingest),
            self.artifact(DICTIONARY_JSON, Stage::Truncate),
        ];
        if self.out(SURVEY_CSV).exists() {
            inputs.push(self.artifact(SURVEY_CSV, Stage::Ingest));
        }
        self.execute(stage, params, inputs, &ANALYTICS_CSVS, |p| p.write_analytics(seed))
    }

    fn write_analytics(&self, seed: u64) -> Result<(), String> {
        let c = &self.config;
        let e = |e: csv::Error| e.to_string();
        let shapes = read_shapes(&self.out(SHAPES_CSV))?;
        let assignments = read_assignments(&self.out(ASSIGNMENTS_CSV))?;
        let weather = read_weather(&self.out(WEATHER_CSV)).map_err(|e| e.to_string())?.records;
        let dict = load_dictionary(&self.out(DICTIONARY_JSON)).map_err(|e| e.to_string())?;
        let records = analytics::join_records(&assignments, &shapes, &weather);
        let k = dict.len();

        let mut provenance = format!("run_id={}; dictionary_digest={}", self.run_id, dictionary_digest(&dict));
        for (key, v) in c.parameters() {
            provenance.push_str(&format!("; {key}={v}"));
        }
        let prov = Some(provenance.as_str());

        // entropy by stratum
        let mut dims: Vec<(&str, Vec<Stratum>)> =
            vec![("all", vec![Stratum::all()]), ("season", Stratum::by_season()), ("day_type", Stratum::by_day_type())];
        let mut summer: Vec<_> = records.iter().filter(|r| r.season == Season::Summer).map(|r| r.key.date).collect();
        summer.sort_unstable();
        summer.dedup();
        match temperature_quartiles(&weather, &summer, c.quartiles.clone()) {
            Ok(bins) => {
                info!("analyze: summer temperature edges {:?}", bins.edges);
                dims.push(("temperature", bins.strata()));
            }
            Err(err) => warn!("analyze: skipping temperature strata: {err}"),
        }
        let path = self.out("entropy_by_stratum.csv");
        let mut w = csv_writer(&path, prov)?;
        w.write_record(["dimension", "stratum", "days", "entropy"]).map_err(e)?;
        for (dim, strata) in &dims {
            for s in stratified_entropy(&records, strata).strata {
                let ent = s.entropy.map(|x| x.to_string()).unwrap_or_default();
                w.write_record([dim, s.label.as_str(), &s.days.to_string(), &ent]).map_err(e)?;
            }
        }
        finish(w, &path)?;

        // coverage
        let path = self.out("coverage_curve.csv");
        let curve = coverage_from_records(&records, k, c.coverage_weight).map_err(|e| e.to_string())?;
        let mut w = csv_writer(&path, prov)?;
        w.write_record(["rank", "cluster_id", "kwh", "share", "cumulative"]).map_err(e)?;
        for en in &curve.entries {
            w.write_record([
                en.rank.to_string(),
                en.cluster_id.to_string(),
                en.kwh.to_string(),
                en.share.to_string(),
                en.cumulative.to_string(),
            ])
            .map_err(e)?;
        }
        finish(w, &path)?;

        // taxonomy
        let path = self.out("taxonomy.csv");
        let taxonomy = peak_taxonomy(&dict.centroids(), c.peak);
        let mut w = csv_writer(&path, prov)?;
        w.write_record(["cluster_id", "peak_count", "peak_hours", "primary_hour", "primary_bin"]).map_err(e)?;
        for t in &taxonomy.shapes {
            let hours: Vec<String> = t.peak_hours.iter().map(usize::to_string).collect();
            w.write_record([
                t.id.to_string(),
                t.peak_count.to_string(),
                hours.join(" "),
                t.primary_hour.to_string(),
                t.primary_bin.to_string(),
            ])
            .map_err(e)?;
        }
        finish(w, &path)?;

        // household entropy
        let period = c.household_period;
        let in_period = |r: &analytics::DayRecord| period.is_none_or(|s| r.season == s);
        let per_household = household_entropy(&records, in_period);
        let mut days: BTreeMap<&str, usize> = BTreeMap::new();
        for r in records.iter().filter(|r| in_period(r)) {
            *days.entry(r.key.household_id.as_str()).or_default() += 1;
        }
        let path = self.out("household_entropy.csv");
        let mut w = csv_writer(&path, prov)?;
        w.write_record(["household_id", "days", "entropy"]).map_err(e)?;
        for (h, s) in &per_household {
            w.write_record([h.as_str(), &days[h.as_str()].to_string(), &s.to_string()]).map_err(e)?;
        }
        finish(w, &path)?;

        // characteristic deltas
        let path = self.out("char_deltas.csv");
        let mut w = csv_writer(&path, prov)?;
        w.write_record(["indicator", "n_with", "n_without", "delta", "ci_low", "ci_high", "status"]).map_err(e)?;
        if self.out(SURVEY_CSV).exists() {
            let survey = read_survey(&self.out(SURVEY_CSV)).map_err(|e| e.to_string())?.records;
            for (i, ind) in Indicator::ALL.into_iter().enumerate() {
                let params = BootstrapParams {
                    resamples: c.bootstrap_resamples,
                    confidence: 0.95,
                    seed: rng::derive(seed, BOOTSTRAP_STREAM + i as u64),
                };
                match characteristic_entropy_delta(&per_household, &survey, ind, &params) {
                    Ok(d) => w.write_record([
                        ind.name().to_string(),
                        d.n_with.to_string(),
                        d.n_without.to_string(),
                        d.delta.to_string(),
                        d.ci_low.to_string(),
                        d.ci_high.to_string(),
                        "ok".to_string(),
                    ]),
                    Err(err) => w.write_record([ind.name(), "", "", "", "", "", &err.to_string()]),
                }
                .map_err(e)?;
            }
        }
        finish(w, &path)?;

        // occurrence map
        let targets: Vec<usize> = c.occurrence_targets.iter().copied().filter(|&t| t < k).collect();
        if targets.len() < c.occurrence_targets.len() {
            warn!("analyze: occurrence targets beyond the {k}-shape dictionary are ignored");
        }
        let path = self.out("occurrence_map.csv");
        let mut w = csv_writer(&path, prov)?;
        if !targets.is_empty() {
            let map = occurrence_map(&records, &targets, k).map_err(|e| e.to_string())?;
            let mut header = vec!["household_id".to_string(), "row_sum".to_string()];
            header.extend(map.dates.iter().map(|d| d.to_string()));
            w.write_record(&header).map_err(e)?;
            for ((h, cells), sum) in map.households.iter().zip(&map.cells).zip(&map.row_sums) {
                let mut row = vec![h.clone(), sum.to_string()];
                row.extend(cells.iter().map(|c| match c {
                    Some(true) => "1".to_string(),
                    Some(false) => "0".to_string(),
                    None => String::new(),
                }));
                w.write_record(&row).map_err(e)?;
            }
            let opt = |x: &Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
            for (label, series) in
                [("_column_mean", &map.column_means), ("_avg_temp_f", &map.daily_temp), ("_daily_entropy", &map.daily_entropy)]
            {
                let mut row = vec![label.to_string(), String::new()];
                row.extend(series.iter().map(opt));
                w.write_record(&row).map_err(e)?;
            }
        }
        finish(w, &path)?;

        // dictionary-level metrics
        let points: Vec<Profile> = shapes.iter().map(|s| s.values).collect();
        let by_key: std::collections::HashMap<_, _> = assignments.iter().map(|a| (&a.key, a.cluster_id)).collect();
        let labels: Vec<usize> = shapes.iter().map(|s| by_key.get(&s.key).copied().unwrap_or(0)).collect();
        let dbi = davies_bouldin(&points, &labels, &dict.centroids());
        let n = assignments.len().max(1) as f64;
        let mean_rse = assignments.iter().map(|a| a.rse).sum::<f64>() / n;
        let violation = assignments.iter().filter(|a| a.rse > dict.theta).count() as f64 / n;
        let path = self.out("dictionary_metrics.csv");
        let mut w = csv_writer(&path, prov)?;
        w.write_record(["metric", "value"]).map_err(e)?;
        let dbi = match dbi {
            Ok(v) => v.to_string(),
            Err(err) => {
                warn!("analyze: Davies-Bouldin index unavailable: {err}");
                String::new()
            }
        };
        for (m, v) in [
            ("shapes", k.to_string()),
            ("household_days", assignments.len().to_string()),
            ("davies_bouldin", dbi),
            ("mean_rse", mean_rse.to_string()),
            ("violation_rate", violation.to_string()),
        ] {
            w.write_record([m, v.as_str()]).map_err(e)?;
        }
        finish(w, &path)
    }
}

/// Generates a synthetic corpus into `out` (`meter.csv`, `weather.csv`,
/// `survey.csv`, `truth.csv`, `synth.conf`), skipping the work if an
/// identical corpus is already recorded there.
pub fn run_synth(config: &SyntheticConfig, seed: u64, out: &Path) -> Result<StageStatus, PipelineError> {
    let stage = Stage::Synth;
    let fail = |message: String| PipelineError::Stage { stage, message };
    config.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    std::fs::create_dir_all(out).map_err(|e| fail(format!("cannot create {}: {e}", out.display())))?;
    let text = format!("seed={seed}\n{}", config.to_text());
    let param_hash = manifest::text_digest(&format!("{stage}\n{}\n{text}", env!("CARGO_PKG_VERSION")));
    let mut manifest = Manifest::load(out);
    let no_inputs = BTreeMap::new();
    if manifest.is_current(stage.name(), &param_hash, &no_inputs, out) {
        info!("{stage}: cached");
        return Ok(StageStatus::Cached);
    }
    let files = ["meter.csv", "weather.csv", "survey.csv", "truth.csv", "synth.conf"];
    let result = generate_synthetic(config, seed)
        .map_err(|e| e.to_string())
        .and_then(|corpus| corpus.write_to(out).map_err(|e| e.to_string()))
        .and_then(|_| std::fs::write(out.join("synth.conf"), &text).map_err(|e| e.to_string()));
    if let Err(m) = result {
        for f in files {
            let _ = std::fs::remove_file(out.join(f));
        }
        return Err(fail(m));
    }
    let outputs = files
        .iter()
        .map(|f| Ok((f.to_string(), file_digest(&out.join(f)).map_err(|e| fail(e.to_string()))?)))
        .collect::<Result<_, PipelineError>>()?;
    manifest
        .stages
        .insert(stage.name().to_string(), StageRecord { param_hash, inputs: no_inputs, outputs });
    manifest.save(out).map_err(|e| fail(e.to_string()))?;
    info!("{stage}: done");
    Ok(StageStatus::Ran)
}
