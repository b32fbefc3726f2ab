use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use loadshape::dictionary::load_dictionary;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_loadshape"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, seed: u64) -> PathBuf {
    let corpus = dir.join("corpus");
    ok(&["synth", "--out", s(&corpus), "--seed", &seed.to_string(), "--households", "40", "--days", "120"]);
    corpus
}

fn pipeline_args(corpus: &Path, out: &Path) -> Vec<String> {
    [
        "--meter",
        s(&corpus.join("meter.csv")),
        "--weather",
        s(&corpus.join("weather.csv")),
        "--survey",
        s(&corpus.join("survey.csv")),
        "--out",
        s(out),
        "--seed",
        "11",
        "--set",
        "bootstrap_resamples=500",
    ]
    .map(String::from)
    .to_vec()
}

fn with<'a>(head: &[&'a str], tail: &'a [String]) -> Vec<&'a str> {
    head.iter().copied().chain(tail.iter().map(String::as_str)).collect()
}

const COMPARED: [&str; 10] = [
    "shapes.csv",
    "dictionary.json",
    "assignments.csv",
    "entropy_by_stratum.csv",
    "coverage_curve.csv",
    "taxonomy.csv",
    "household_entropy.csv",
    "char_deltas.csv",
    "occurrence_map.csv",
    "dictionary_metrics.csv",
];

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = synth(a.path(), 7);
    let cb = synth(b.path(), 7);
    for f in ["meter.csv", "weather.csv", "survey.csv", "truth.csv"] {
        assert_eq!(std::fs::read(ca.join(f)).unwrap(), std::fs::read(cb.join(f)).unwrap(), "{f}");
    }
    let cc = synth(&a.path().join("other"), 8);
    assert_ne!(std::fs::read(ca.join("meter.csv")).unwrap(), std::fs::read(cc.join("meter.csv")).unwrap());
}

#[test]
fn full_run_is_reproducible_and_cached() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 3);
    let out1 = dir.path().join("out1");
    let out2 = dir.path().join("out2");
    let args1 = pipeline_args(&corpus, &out1);
    let args2 = pipeline_args(&corpus, &out2);

    let first = ok(&with(&["run"], &args1));
    assert_eq!(first.matches(": done").count(), 5, "{first}");
    let again = ok(&with(&["run"], &args1));
    assert_eq!(again.matches(": cached").count(), 5, "{again}");

    ok(&with(&["--threads", "1", "run"], &args2));
    for f in COMPARED {
        assert_eq!(std::fs::read(out1.join(f)).unwrap(), std::fs::read(out2.join(f)).unwrap(), "{f} differs");
    }
    let header = std::fs::read_to_string(out1.join("entropy_by_stratum.csv")).unwrap();
    let first_line = header.lines().next().unwrap();
    assert!(first_line.starts_with("# run_id="), "{first_line}");
    assert!(first_line.contains("dictionary_digest=") && first_line.contains("theta=0.3"));
}

#[test]
fn changed_parameter_reruns_only_downstream() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 4);
    let out = dir.path().join("out");
    let args = pipeline_args(&corpus, &out);
    ok(&with(&["run"], &args));
    let log = ok(&with(&["run", "--truncate-violation", "0.1"], &args));
    assert!(log.contains("ingest: cached") && log.contains("cluster: cached"), "{log}");
    assert!(log.contains("truncate: done") && log.contains("analyze: done"), "{log}");
}

#[test]
fn zero_theta_is_rejected_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["run", "--meter", "m.csv", "--weather", "w.csv", "--out", s(&out), "--seed", "1", "--theta", "0"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("theta"));
    assert!(!out.exists());
}

#[test]
fn analyze_without_assignments_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["analyze", "--out", s(dir.path()), "--seed", "1"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("run `assign` first"), "{err}");
}

#[test]
fn cluster_requires_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["cluster", "--out", s(dir.path())]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn failed_stage_leaves_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 5);
    std::fs::write(dir.path().join("bad_weather.csv"), "day,temp\n2011-06-01,70\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "ingest",
        "--meter",
        s(&corpus.join("meter.csv")),
        "--weather",
        s(&dir.path().join("bad_weather.csv")),
        "--out",
        s(&out),
    ]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("stage `ingest`") && err.contains("header"), "{err}");
    assert!(!out.join("shapes.csv").exists());
    assert!(!out.join("cleaning_report.csv").exists());
}

#[test]
fn larger_budget_never_grows_the_dictionary() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 6);
    let out = dir.path().join("out");
    let args = pipeline_args(&corpus, &out);
    ok(&with(&["ingest"], &args));
    ok(&with(&["cluster"], &args));
    ok(&with(&["truncate", "--V", "0.10"], &args));
    let small_v = load_dictionary(&out.join("dictionary.json")).unwrap().len();
    ok(&with(&["truncate", "--V", "0.30"], &args));
    let large_v = load_dictionary(&out.join("dictionary.json")).unwrap().len();
    assert!(large_v <= small_v, "V=0.30 gave {large_v} shapes, V=0.10 gave {small_v}");
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 9);
    let out = dir.path().join("out");
    let conf = dir.path().join("run.conf");
    std::fs::write(
        &conf,
        format!(
            "meter={}\nweather={}\nout={}\nseed=2\ntheta=0.25\nbootstrap_resamples=100\n",
            s(&corpus.join("meter.csv")),
            s(&corpus.join("weather.csv")),
            s(&out)
        ),
    )
    .unwrap();
    ok(&["run", "--config", s(&conf), "--theta", "0.35"]);
    let dict = load_dictionary(&out.join("dictionary.json")).unwrap();
    assert_eq!(dict.theta, 0.35);
    assert_eq!(dict.provenance.parameters["seed"], "2");
    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "tehta=0.3\n").unwrap();
    let o = run(&["run", "--config", s(&bad)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key `tehta`"));
}
