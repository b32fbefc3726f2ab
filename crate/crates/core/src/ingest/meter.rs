use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::path::Path;

use super::{check_header, csv_err, open_reader, parse_date, DayKey, IngestError, LoadDay, Parsed, RowDiagnostic};
use crate::HOURS;

/// Layout of a meter file.
///
/// - `Wide`: `household_id,date,h1..h24`, one row per household-day
/// - `Long`: `household_id,date,hour,kwh`, one row per household-hour (hour 1..24)
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeterSchema {
    Wide,
    Long,
}

impl MeterSchema {
    fn header(self) -> Vec<String> {
        let mut cols = vec!["household_id".to_string(), "date".to_string()];
        match self {
            MeterSchema::Wide => cols.extend((1..=HOURS).map(|h| format!("h{h}"))),
            MeterSchema::Long => cols.extend(["hour".to_string(), "kwh".to_string()]),
        }
        cols
    }
}

/// Non-numeric, negative or non-finite cells become missing slots, never zero.
fn parse_reading(cell: &str) -> Option<f64> {
    let v: f64 = cell.trim().parse().ok()?;
    (v.is_finite() && v >= 0.0).then_some(v)
}

pub fn read_meter_corpus(path: &Path, schema: MeterSchema) -> Result<Parsed<LoadDay>, IngestError> {
    let mut reader = open_reader(path)?;
    let header = reader.headers().map_err(csv_err(path))?.clone();
    let expected = schema.header();
    let expected: Vec<&str> = expected.iter().map(String::as_str).collect();
    check_header(path, &header, &expected)?;
    match schema {
        MeterSchema::Wide => read_wide(path, reader),
        MeterSchema::Long => read_long(path, reader),
    }
}

fn read_wide(path: &Path, mut reader: csv::Reader<std::fs::File>) -> Result<Parsed<LoadDay>, IngestError> {
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut seen: HashMap<DayKey, u64> = HashMap::new();
    for row in reader.records() {
        let row = row.map_err(csv_err(path))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != HOURS + 2 {
            rejected.push(RowDiagnostic {
                line,
                message: format!("expected {HOURS} hourly columns, found {}", row.len().saturating_sub(2)),
            });
            continue;
        }
        let id = row[0].trim();
        if id.is_empty() {
            rejected.push(RowDiagnostic { line, message: "empty household_id".into() });
            continue;
        }
        let date = match parse_date(&row[1]) {
            Ok(d) => d,
            Err(message) => {
                rejected.push(RowDiagnostic { line, message });
                continue;
            }
        };
        let key = DayKey::new(id, date);
        if seen.insert(key.clone(), line).is_some() {
            return Err(IngestError::Duplicate {
                path: path.to_path_buf(),
                line,
                key: key.to_string(),
            });
        }
        let mut kwh = [None; HOURS];
        for (slot, cell) in kwh.iter_mut().zip(row.iter().skip(2)) {
            *slot = parse_reading(cell);
        }
        records.push(LoadDay::new(key, kwh));
    }
    Ok(Parsed { records, rejected })
}

fn read_long(path: &Path, mut reader: csv::Reader<std::fs::File>) -> Result<Parsed<LoadDay>, IngestError> {
    let mut records: Vec<LoadDay> = Vec::new();
    let mut index: HashMap<DayKey, usize> = HashMap::new();
    let mut filled: Vec<[bool; HOURS]> = Vec::new();
    let mut rejected = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_err(path))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 4 {
            rejected.push(RowDiagnostic {
                line,
                message: format!("expected 4 columns, found {}", row.len()),
            });
            continue;
        }
        let id = row[0].trim();
        if id.is_empty() {
            rejected.push(RowDiagnostic { line, message: "empty household_id".into() });
            continue;
        }
        let date = match parse_date(&row[1]) {
            Ok(d) => d,
            Err(message) => {
                rejected.push(RowDiagnostic { line, message });
                continue;
            }
        };
        let hour = match row[2].trim().parse::<usize>() {
            Ok(h) if (1..=HOURS).contains(&h) => h,
            _ => {
                rejected.push(RowDiagnostic {
                    line,
                    message: format!("hour `{}` outside 1..={HOURS}", &row[2]),
                });
                continue;
            }
        };
        let key = DayKey::new(id, date);
        let slot = match index.entry(key.clone()) {
            Entry::Occupied(e) => *e.get(),
            Entry::Vacant(e) => {
                records.push(LoadDay::new(key.clone(), [None; HOURS]));
                filled.push([false; HOURS]);
                *e.insert(records.len() - 1)
            }
        };
        if std::mem::replace(&mut filled[slot][hour - 1], true) {
            return Err(IngestError::Duplicate {
                path: path.to_path_buf(),
                line,
                key: format!("{key} hour {hour}"),
            });
        }
        records[slot].kwh[hour - 1] = parse_reading(&row[3]);
    }
    Ok(Parsed { records, rejected })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_meter_corpus(path: &Path, days: &[LoadDay], schema: MeterSchema) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(schema.header()).map_err(csv_err(path))?;
    for day in days {
        let id = day.key.household_id.as_str();
        let date = day.key.date.to_string();
        match schema {
            MeterSchema::Wide => {
                let mut row = Vec::with_capacity(HOURS + 2);
                row.push(id.to_string());
                row.push(date);
                row.extend(day.kwh.iter().map(|v| cell(*v)));
                w.write_record(&row).map_err(csv_err(path))?;
            }
            MeterSchema::Long => {
                for (h, v) in day.kwh.iter().enumerate() {
                    w.write_record([id, &date, &(h + 1).to_string(), &cell(*v)])
                        .map_err(csv_err(path))?;
                }
            }
        }
    }
    w.flush().map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    fn wide_header() -> String {
        MeterSchema::Wide.header().join(",")
    }

    #[test]
    fn wide_row_parses_24_slots() {
        let dir = tempfile::tempdir().unwrap();
        let vals: Vec<String> = (0..24).map(|i| format!("{}", 0.3 + i as f64 / 10.0)).collect();
        let p = write(&dir, "m.csv", &format!("{}\nH1,2011-06-01,{}\n", wide_header(), vals.join(",")));
        let parsed = read_meter_corpus(&p, MeterSchema::Wide).unwrap();
        assert!(parsed.rejected.is_empty());
        assert_eq!(parsed.records.len(), 1);
        let day = &parsed.records[0];
        assert_eq!(day.key.household_id, "H1");
        assert_eq!(day.key.date, NaiveDate::from_ymd_opt(2011, 6, 1).unwrap());
        assert_eq!(day.kwh[0], Some(0.3));
        assert!(day.kwh.iter().all(Option::is_some));
    }

    #[test]
    fn wide_row_with_23_values_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let vals = vec!["0.5"; 23].join(",");
        let p = write(&dir, "m.csv", &format!("{}\nH1,2011-06-01,{vals}\n", wide_header()));
        let parsed = read_meter_corpus(&p, MeterSchema::Wide).unwrap();
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.rejected.len(), 1);
        assert_eq!(parsed.rejected[0].line, 2);
        assert!(parsed.rejected[0].message.contains("expected 24 hourly columns"));
    }

    #[test]
    fn malformed_cells_become_missing_not_zero() {
        let dir = tempfile::tempdir().unwrap();
        let mut vals = vec!["0.5".to_string(); 24];
        vals[3] = "abc".into();
        vals[12] = String::new();
        vals[20] = "-1".into();
        let p = write(&dir, "m.csv", &format!("{}\nH1,2011-06-01,{}\n", wide_header(), vals.join(",")));
        let day = &read_meter_corpus(&p, MeterSchema::Wide).unwrap().records[0];
        assert_eq!(day.kwh[3], None);
        assert_eq!(day.kwh[12], None);
        assert_eq!(day.kwh[20], None);
        assert_eq!(day.kwh.iter().filter(|v| v.is_some()).count(), 21);
    }

    #[test]
    fn duplicate_day_is_a_hard_error() {
        let dir = tempfile::tempdir().unwrap();
        let vals = vec!["0.5"; 24].join(",");
        let body = format!("{}\nH1,2011-06-01,{vals}\nH1,2011-06-01,{vals}\n", wide_header());
        let p = write(&dir, "m.csv", &body);
        match read_meter_corpus(&p, MeterSchema::Wide) {
            Err(IngestError::Duplicate { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn header_mismatch_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "m.csv", "household_id,date,hour,kwh\n");
        assert!(matches!(
            read_meter_corpus(&p, MeterSchema::Wide),
            Err(IngestError::HeaderMismatch { .. })
        ));
        assert!(matches!(
            read_meter_corpus(&dir.path().join("nope.csv"), MeterSchema::Wide),
            Err(IngestError::Io { .. })
        ));
    }

    #[test]
    fn long_rows_match_wide_row() {
        let dir = tempfile::tempdir().unwrap();
        let vals: Vec<f64> = (0..24).map(|i| 0.25 + i as f64 * 0.05).collect();
        let wide = format!(
            "{}\nH1,2011-06-01,{}\n",
            wide_header(),
            vals.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
        );
        let mut long = String::from("household_id,date,hour,kwh\n");
        // hours deliberately out of order
        for h in (1..=24).rev() {
            long.push_str(&format!("H1,2011-06-01,{h},{}\n", vals[h - 1]));
        }
        let w = read_meter_corpus(&write(&dir, "w.csv", &wide), MeterSchema::Wide).unwrap();
        let l = read_meter_corpus(&write(&dir, "l.csv", &long), MeterSchema::Long).unwrap();
        assert_eq!(w.records, l.records);
    }

    #[test]
    fn long_bad_hour_rejected_and_gap_is_missing() {
        let dir = tempfile::tempdir().unwrap();
        let mut long = String::from("household_id,date,hour,kwh\n");
        for h in 1..=23 {
            long.push_str(&format!("H1,2011-06-01,{h},0.4\n"));
        }
        long.push_str("H1,2011-06-01,25,0.4\n");
        let parsed = read_meter_corpus(&write(&dir, "l.csv", &long), MeterSchema::Long).unwrap();
        assert_eq!(parsed.rejected.len(), 1);
        assert_eq!(parsed.records[0].kwh[23], None);
        assert!(parsed.records[0].readings().is_none());
    }
}
