//! CSV and JSON artifacts exchanged between stages.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dictionary::Assignment;
use crate::ingest::{parse_date, DayKey};
use crate::kmeans::{ClusterModel, ModelMeta};
use crate::preprocess::ShapeVector;
use crate::{Profile, HOURS};

pub type IoResult<T> = Result<T, String>;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> String + '_ {
    move |e| format!("{}: {e}", path.display())
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> String + '_ {
    move |e| format!("{}: {e}", path.display())
}

/// Opens a CSV file for reading, skipping `#` provenance lines.
pub fn csv_reader(path: &Path) -> IoResult<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_err(path))
}

/// Creates a CSV writer whose first line is `# provenance`, if given.
pub fn csv_writer(path: &Path, provenance: Option<&str>) -> IoResult<csv::Writer<BufWriter<File>>> {
    let mut f = BufWriter::new(File::create(path).map_err(io_err(path))?);
    if let Some(p) = provenance {
        writeln!(f, "# {p}").map_err(io_err(path))?;
    }
    Ok(csv::Writer::from_writer(f))
}

pub fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> IoResult<()> {
    w.flush().map_err(io_err(path))
}

/// Reads the `# ...` provenance line of an analytics CSV, if present.
pub fn read_provenance(path: &Path) -> IoResult<Option<String>> {
    let mut line = String::new();
    BufReader::new(File::open(path).map_err(io_err(path))?)
        .read_line(&mut line)
        .map_err(io_err(path))?;
    Ok(line.strip_prefix("# ").map(|s| s.trim_end().to_string()))
}

fn num(path: &Path, line: u64, field: &str, cell: &str) -> IoResult<f64> {
    cell.parse()
        .map_err(|_| format!("{}: line {line}: bad {field} `{cell}`", path.display()))
}

fn shape_header() -> Vec<String> {
    let mut h: Vec<String> = ["household_id", "date", "day_total_kwh", "discretionary_kwh"]
        .map(String::from)
        .to_vec();
    h.extend((0..HOURS).map(|i| format!("s{i:02}")));
    h
}

pub fn write_shapes(path: &Path, shapes: &[ShapeVector]) -> IoResult<()> {
    let mut w = csv_writer(path, None)?;
    w.write_record(shape_header()).map_err(csv_err(path))?;
    let mut row: Vec<String> = Vec::with_capacity(HOURS + 4);
    for s in shapes {
        row.clear();
        row.push(s.key.household_id.clone());
        row.push(s.key.date.to_string());
        row.push(s.day_total_kwh.to_string());
        row.push(s.discretionary_kwh.to_string());
        row.extend(s.values.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    finish(w, path)
}

pub fn read_shapes(path: &Path) -> IoResult<Vec<ShapeVector>> {
    let mut r = csv_reader(path)?;
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(csv_err(path))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != HOURS + 4 {
            return Err(format!("{}: line {line}: expected {} fields", path.display(), HOURS + 4));
        }
        let date = parse_date(&row[1]).map_err(|e| format!("{}: line {line}: {e}", path.display()))?;
        let mut values: Profile = [0.0; HOURS];
        for (h, v) in values.iter_mut().enumerate() {
            *v = num(path, line, "shape value", &row[4 + h])?;
        }
        out.push(ShapeVector {
            key: DayKey::new(&row[0], date),
            values,
            day_total_kwh: num(path, line, "day_total_kwh", &row[2])?,
            discretionary_kwh: num(path, line, "discretionary_kwh", &row[3])?,
        });
    }
    Ok(out)
}

pub fn write_assignments(path: &Path, assignments: &[Assignment]) -> IoResult<()> {
    let mut w = csv_writer(path, None)?;
    w.write_record(["household_id", "date", "cluster_id", "distance", "rse"])
        .map_err(csv_err(path))?;
    for a in assignments {
        w.write_record([
            a.key.household_id.as_str(),
            &a.key.date.to_string(),
            &a.cluster_id.to_string(),
            &a.distance.to_string(),
            &a.rse.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    finish(w, path)
}

pub fn read_assignments(path: &Path) -> IoResult<Vec<Assignment>> {
    let mut r = csv_reader(path)?;
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(csv_err(path))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 5 {
            return Err(format!("{}: line {line}: expected 5 fields", path.display()));
        }
        let date = parse_date(&row[1]).map_err(|e| format!("{}: line {line}: {e}", path.display()))?;
        let cluster_id = row[2]
            .parse()
            .map_err(|_| format!("{}: line {line}: bad cluster_id `{}`", path.display(), &row[2]))?;
        out.push(Assignment {
            key: DayKey::new(&row[0], date),
            cluster_id,
            distance: num(path, line, "distance", &row[3])?,
            rse: num(path, line, "rse", &row[4])?,
        });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct CentroidRepr {
    values: Vec<f64>,
    member_count: usize,
}

/// On-disk form of a merged cluster model: the clustered subsample (as row
/// indices into `shapes.csv`), its labels and the centroids.
#[derive(Serialize, Deserialize)]
pub struct ModelFile {
    pub theta: f64,
    pub population: usize,
    pub sample: Vec<usize>,
    pub labels: Vec<usize>,
    centroids: Vec<CentroidRepr>,
    pub violation_rate: f64,
    pub meta: ModelMeta,
}

impl ModelFile {
    pub fn new(model: &ClusterModel, population: usize, sample: Vec<usize>) -> Self {
        Self {
            theta: model.theta(),
            population,
            sample,
            labels: model.labels().to_vec(),
            centroids: model
                .centroids()
                .iter()
                .map(|c| CentroidRepr { values: c.values.to_vec(), member_count: c.member_count })
                .collect(),
            violation_rate: model.violation_rate(),
            meta: model.meta.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> IoResult<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| e.to_string())?;
        std::fs::write(path, text).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> IoResult<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Rebuilds the model over `points`, the shapes at `self.sample`.
    pub fn to_model(&self, points: &[Profile]) -> IoResult<ClusterModel> {
        let centroids = self
            .centroids
            .iter()
            .map(|c| {
                <Profile>::try_from(c.values.as_slice()).map_err(|_| "centroid must have 24 values".to_string())
            })
            .collect::<Result<Vec<_>, _>>()?;
        ClusterModel::new(points, centroids, self.labels.clone(), self.theta, self.meta.clone())
            .map_err(|e| e.to_string())
    }
}
