use std::collections::HashMap;
use std::path::Path;

use log::warn;

use super::{check_header, csv_err, open_reader, parse_date, IngestError, Parsed, RowDiagnostic, WeatherDay};

const HEADER: [&str; 2] = ["date", "avg_temp_f"];

/// Reads `date,avg_temp_f`. A file with no content at all yields an empty collection.
pub fn read_weather(path: &Path) -> Result<Parsed<WeatherDay>, IngestError> {
    let meta = std::fs::metadata(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if meta.len() == 0 {
        warn!("{}: empty weather file", path.display());
        return Ok(Parsed { records: Vec::new(), rejected: Vec::new() });
    }
    let mut reader = open_reader(path)?;
    let header = reader.headers().map_err(csv_err(path))?.clone();
    check_header(path, &header, &HEADER)?;

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = HashMap::new();
    for row in reader.records() {
        let row = row.map_err(csv_err(path))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 2 {
            rejected.push(RowDiagnostic { line, message: format!("expected 2 columns, found {}", row.len()) });
            continue;
        }
        let date = match parse_date(&row[0]) {
            Ok(d) => d,
            Err(message) => {
                rejected.push(RowDiagnostic { line, message });
                continue;
            }
        };
        let temp = match row[1].trim().parse::<f64>() {
            Ok(t) if t.is_finite() => t,
            _ => {
                rejected.push(RowDiagnostic {
                    line,
                    message: format!("non-numeric temperature `{}`", &row[1]),
                });
                continue;
            }
        };
        if seen.insert(date, line).is_some() {
            return Err(IngestError::Duplicate {
                path: path.to_path_buf(),
                line,
                key: date.to_string(),
            });
        }
        records.push(WeatherDay { date, avg_temp_f: temp });
    }
    if records.is_empty() {
        warn!("{}: no weather records", path.display());
    }
    Ok(Parsed { records, rejected })
}

pub fn write_weather(path: &Path, days: &[WeatherDay]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(HEADER).map_err(csv_err(path))?;
    for d in days {
        w.write_record([d.date.to_string(), d.avg_temp_f.to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}
