use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ClusterDictionary, DictionaryError, DictionaryShape, Provenance};

pub const SCHEMA_VERSION: u64 = 1;
const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Serialize)]
struct Body<'a> {
    schema_version: u64,
    theta: f64,
    truncation_v: f64,
    shapes: &'a [DictionaryShape],
    provenance: &'a Provenance,
}

#[derive(Serialize, Deserialize)]
struct FileRepr {
    schema_version: u64,
    theta: f64,
    truncation_v: f64,
    shapes: Vec<DictionaryShape>,
    provenance: Provenance,
    digest: String,
}

fn digest(dict: &ClusterDictionary) -> Result<String, DictionaryError> {
    let body = Body {
        schema_version: SCHEMA_VERSION,
        theta: dict.theta,
        truncation_v: dict.truncation_v,
        shapes: &dict.shapes,
        provenance: &dict.provenance,
    };
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&body)?)))
}

/// Content digest of a dictionary, as stored in `dictionary.json`.
pub fn dictionary_digest(dict: &ClusterDictionary) -> String {
    digest(dict).expect("dictionary serialises")
}

pub fn save_dictionary(dict: &ClusterDictionary, path: &Path) -> Result<(), DictionaryError> {
    let repr = FileRepr {
        schema_version: SCHEMA_VERSION,
        theta: dict.theta,
        truncation_v: dict.truncation_v,
        shapes: dict.shapes.clone(),
        provenance: dict.provenance.clone(),
        digest: digest(dict)?,
    };
    let text = serde_json::to_string_pretty(&repr)?;
    std::fs::write(path, text).map_err(|source| DictionaryError::Io { path: path.to_path_buf(), source })
}

fn check_invariants(dict: &ClusterDictionary) -> Result<(), DictionaryError> {
    if dict.shapes.is_empty() {
        return Err(DictionaryError::EmptyDictionary);
    }
    for (pos, s) in dict.shapes.iter().enumerate() {
        if s.id != pos {
            return Err(DictionaryError::Invariant(format!("shape at position {pos} has id {}", s.id)));
        }
        if s.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(DictionaryError::Invariant(format!("shape {pos} has negative or non-finite values")));
        }
        let sum: f64 = s.values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(DictionaryError::Invariant(format!("shape {pos} sums to {sum}")));
        }
    }
    if let Some(w) = dict.shapes.windows(2).find(|w| w[1].kwh > w[0].kwh) {
        return Err(DictionaryError::Invariant(format!(
            "shapes {} and {} are not in descending kWh order",
            w[0].id, w[1].id
        )));
    }
    Ok(())
}

/// Loads and verifies `dictionary.json`: schema version, shape invariants, then digest.
pub fn load_dictionary(path: &Path) -> Result<ClusterDictionary, DictionaryError> {
    let text = std::fs::read_to_string(path).map_err(|source| DictionaryError::Io { path: path.to_path_buf(), source })?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    let found = raw.get("schema_version").and_then(serde_json::Value::as_u64).unwrap_or(0);
    if found != SCHEMA_VERSION {
        return Err(DictionaryError::VersionMismatch { found, expected: SCHEMA_VERSION });
    }
    let repr: FileRepr = serde_json::from_value(raw)?;
    let dict = ClusterDictionary {
        shapes: repr.shapes,
        theta: repr.theta,
        truncation_v: repr.truncation_v,
        provenance: repr.provenance,
    };
    check_invariants(&dict)?;
    let computed = digest(&dict)?;
    if computed != repr.digest {
        return Err(DictionaryError::CorruptedDigest { stored: repr.digest, computed });
    }
    Ok(dict)
}
