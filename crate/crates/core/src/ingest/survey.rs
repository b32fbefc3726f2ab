use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use super::{csv_err, open_reader, HouseholdProfile, Indicator, IngestError, Parsed, RowDiagnostic};

/// Reads a survey file whose header is `household_id` plus any subset of the
/// indicator vocabulary, in any order. Cells `1`/`0`/empty map to
/// true/false/unknown.
pub fn read_survey(path: &Path) -> Result<Parsed<HouseholdProfile>, IngestError> {
    let mut reader = open_reader(path)?;
    let header = reader.headers().map_err(csv_err(path))?.clone();

    let mut id_col = None;
    let mut columns: Vec<Option<Indicator>> = Vec::with_capacity(header.len());
    for (i, name) in header.iter().map(str::trim).enumerate() {
        if name == "household_id" && id_col.is_none() {
            id_col = Some(i);
            columns.push(None);
            continue;
        }
        let ind = name.parse::<Indicator>().map_err(|_| IngestError::UnknownIndicator {
            path: path.to_path_buf(),
            column: name.to_string(),
            allowed: Indicator::vocabulary(),
        })?;
        if columns.contains(&Some(ind)) {
            return Err(IngestError::HeaderMismatch {
                path: path.to_path_buf(),
                expected: "each indicator at most once".into(),
                found: header.iter().collect::<Vec<_>>().join(","),
            });
        }
        columns.push(Some(ind));
    }
    let id_col = id_col.ok_or_else(|| IngestError::HeaderMismatch {
        path: path.to_path_buf(),
        expected: "household_id,<indicators>".into(),
        found: header.iter().collect::<Vec<_>>().join(","),
    })?;

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = HashSet::new();
    'rows: for row in reader.records() {
        let row = row.map_err(csv_err(path))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != columns.len() {
            rejected.push(RowDiagnostic {
                line,
                message: format!("expected {} columns, found {}", columns.len(), row.len()),
            });
            continue;
        }
        let id = row[id_col].trim().to_string();
        if id.is_empty() {
            rejected.push(RowDiagnostic { line, message: "empty household_id".into() });
            continue;
        }
        let mut indicators = BTreeMap::new();
        for (cell, col) in row.iter().zip(&columns) {
            let Some(ind) = col else { continue };
            match cell.trim() {
                "1" => {
                    indicators.insert(*ind, true);
                }
                "0" => {
                    indicators.insert(*ind, false);
                }
                "" => {}
                other => {
                    rejected.push(RowDiagnostic {
                        line,
                        message: format!("{ind}: expected 0, 1 or empty, found `{other}`"),
                    });
                    continue 'rows;
                }
            }
        }
        if !seen.insert(id.clone()) {
            return Err(IngestError::Duplicate {
                path: path.to_path_buf(),
                line,
                key: id,
            });
        }
        records.push(HouseholdProfile { household_id: id, indicators });
    }
    Ok(Parsed { records, rejected })
}

/// Writes every vocabulary column, in vocabulary order.
pub fn write_survey(path: &Path, profiles: &[HouseholdProfile]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["household_id"];
    header.extend(Indicator::ALL.map(Indicator::name));
    w.write_record(&header).map_err(csv_err(path))?;
    for p in profiles {
        let mut row = vec![p.household_id.clone()];
        row.extend(Indicator::ALL.iter().map(|i| match p.get(*i) {
            Some(true) => "1".to_string(),
            Some(false) => "0".to_string(),
            None => String::new(),
        }));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}
