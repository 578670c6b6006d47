//! Loading datasets from disk or from the bundled copies, with schema and
//! checksum validation.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use bfvi::models::{bundled, Dataset, EightSchoolsData};
use sha2::{Digest, Sha256};

/// Expected layout of a data file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    /// CSV whose header contains exactly these columns.
    Csv(&'static [&'static str]),
    /// CSV with a response column and at least one predictor.
    Design { response: &'static str },
    /// `{"y": [...], "sigma": [...]}`.
    EightSchoolsJson,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: checksum mismatch (expected {expected}, found {found})")]
    Checksum { path: String, expected: String, found: String },
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses a `sha256sum`-style listing into `file name → digest`.
pub fn parse_checksums(text: &str) -> HashMap<String, String> {
    text.lines()
        .filter_map(|line| {
            let (digest, name) = line.split_once(char::is_whitespace)?;
            Some((name.trim().trim_start_matches('*').to_string(), digest.to_lowercase()))
        })
        .collect()
}

/// Parses `text` under `schema`; `origin` names the file in messages.
pub fn parse(text: &str, schema: Schema, origin: &str) -> Result<Dataset, IngestError> {
    let schema_err = |message: String| IngestError::Schema {
        path: origin.to_string(),
        message,
    };
    match schema {
        Schema::EightSchoolsJson => EightSchoolsData::from_json_str(text).map_err(|e| schema_err(e.to_string())),
        Schema::Csv(columns) => {
            let data = Dataset::from_csv_str(text).map_err(|e| schema_err(e.to_string()))?;
            if let Some(missing) = columns.iter().find(|c| !data.names().iter().any(|n| n == *c)) {
                return Err(schema_err(format!("missing column '{missing}'")));
            }
            if let Some(extra) = data.names().iter().find(|n| !columns.contains(&n.as_str())) {
                return Err(schema_err(format!("unexpected column '{extra}'")));
            }
            Ok(data)
        }
        Schema::Design { response } => {
            let data = Dataset::from_csv_str(text).map_err(|e| schema_err(e.to_string()))?;
            if !data.names().iter().any(|n| n == response) {
                return Err(schema_err(format!("missing column '{response}'")));
            }
            if data.names().len() < 2 {
                return Err(schema_err("no predictor columns".into()));
            }
            Ok(data)
        }
    }
}

/// Reads and validates `path`. When a `SHA256SUMS` file next to it lists the
/// file, its digest must match.
pub fn ingest(path: &Path, schema: Schema) -> Result<(Dataset, String), IngestError> {
    let shown = path.display().to_string();
    let bytes = fs::read(path).map_err(|source| IngestError::Io {
        path: shown.clone(),
        source,
    })?;
    let digest = sha256_hex(&bytes);
    if let (Some(dir), Some(name)) = (path.parent(), path.file_name()) {
        if let Ok(sums) = fs::read_to_string(dir.join("SHA256SUMS")) {
            if let Some(expected) = parse_checksums(&sums).get(&*name.to_string_lossy()) {
                if *expected != digest {
                    return Err(IngestError::Checksum {
                        path: shown,
                        expected: expected.clone(),
                        found: digest,
                    });
                }
            }
        }
    }
    let text = String::from_utf8(bytes).map_err(|e| IngestError::Schema {
        path: shown.clone(),
        message: format!("not UTF-8: {e}"),
    })?;
    Ok((parse(&text, schema, &shown)?, digest))
}

/// The embedded copy of `file`, checked against the embedded checksums.
pub fn ingest_bundled(file: &str, schema: Schema) -> Result<(Dataset, String), IngestError> {
    let origin = format!("bundled {}/{file}", bundled::VERSION);
    let text = bundled::text(file).ok_or_else(|| IngestError::Schema {
        path: origin.clone(),
        message: "no such bundled file".into(),
    })?;
    let digest = sha256_hex(text.as_bytes());
    let sums = parse_checksums(bundled::text("SHA256SUMS").unwrap_or_default());
    match sums.get(file) {
        Some(expected) if *expected == digest => Ok((parse(text, schema, &origin)?, digest)),
        other => Err(IngestError::Checksum {
            path: origin,
            expected: other.cloned().unwrap_or_else(|| "<unlisted>".into()),
            found: digest,
        }),
    }
}
