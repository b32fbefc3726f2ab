use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{error, info};

use loadshape::ingest::SyntheticConfig;
use loadshape::pipeline::{run_synth, Pipeline, RunConfig, Stage};

/// Dictionary load shapes from hourly smart-meter data.
#[derive(Parser)]
#[command(name = "loadshape", version)]
struct Cli {
    /// Worker threads (defaults to all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted structure.
    Synth(SynthArgs),
    /// Clean and normalize meter data into shapes.csv.
    Ingest(RunArgs),
    /// Adaptive k-means plus merging on a subsample, producing model.json.
    Cluster(RunArgs),
    /// Truncate the merged model into dictionary.json.
    Truncate(RunArgs),
    /// Assign every shape to its nearest dictionary shape.
    Assign(RunArgs),
    /// Compute entropy, coverage, taxonomy and occurrence outputs.
    Analyze(RunArgs),
    /// Run ingest through analyze.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    meter: Option<PathBuf>,
    #[arg(long)]
    weather: Option<PathBuf>,
    #[arg(long)]
    survey: Option<PathBuf>,
    /// Output directory holding artifacts and run_manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RSE threshold for a shape to fit its centroid.
    #[arg(long)]
    theta: Option<String>,
    /// Violation-rate cap for merging.
    #[arg(long)]
    merge_violation: Option<String>,
    /// Violation budget V for truncation.
    #[arg(long, visible_alias = "V")]
    truncate_violation: Option<String>,
    /// Shapes to cluster (clamped to the corpus size).
    #[arg(long)]
    sample: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// `empirical` or `fixed:a,b,c` (°F).
    #[arg(long)]
    quartiles: Option<String>,
    /// `total` or `discretionary`.
    #[arg(long)]
    coverage_weight: Option<String>,
    /// Extra KEY=VALUE settings, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    settings: Vec<String>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            config.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
        }
        for s in &self.settings {
            config.apply_text(s)?;
        }
        let paths = [("meter", &self.meter), ("weather", &self.weather), ("survey", &self.survey), ("out", &self.out)];
        for (key, value) in paths {
            if let Some(v) = value {
                config.set(key, &v.to_string_lossy())?;
            }
        }
        let values = [
            ("theta", &self.theta),
            ("merge_violation", &self.merge_violation),
            ("truncate_violation", &self.truncate_violation),
            ("sample", &self.sample),
            ("seed", &self.seed),
            ("quartiles", &self.quartiles),
            ("coverage_weight", &self.coverage_weight),
        ];
        for (key, value) in values {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Generator config file (key=value).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    households: Option<usize>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    archetypes: Option<usize>,
    /// Extra generator KEY=VALUE settings, e.g. `bias.elderly=-0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    settings: Vec<String>,
}

fn synth(args: &SynthArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            SyntheticConfig::parse(&text)?
        }
        None => SyntheticConfig::default(),
    };
    for s in &args.settings {
        let (k, v) = s.split_once('=').with_context(|| format!("expected KEY=VALUE, got `{s}`"))?;
        config.set(k.trim(), v.trim()).map_err(anyhow::Error::msg)?;
    }
    let counts = [("households", args.households), ("days", args.days), ("archetypes", args.archetypes)];
    for (key, value) in counts {
        if let Some(v) = value {
            config.set(key, &v.to_string()).map_err(anyhow::Error::msg)?;
        }
    }
    let status = run_synth(&config, args.seed, &args.out)?;
    println!("synth: {status}");
    Ok(())
}

fn stages(args: &RunArgs, stages: &[Stage]) -> Result<()> {
    let mut pipeline = Pipeline::new(args.config()?)?;
    info!("run {} -> {}", pipeline.run_id(), pipeline.config().out.display());
    for &stage in stages {
        let status = pipeline.run(stage)?;
        println!("{stage}: {status}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("cannot configure {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => stages(a, &[Stage::Ingest]),
        Command::Cluster(a) => stages(a, &[Stage::Cluster]),
        Command::Truncate(a) => stages(a, &[Stage::Truncate]),
        Command::Assign(a) => stages(a, &[Stage::Assign]),
        Command::Analyze(a) => stages(a, &[Stage::Analyze]),
        Command::Run(a) => stages(a, &Stage::PIPELINE),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
