//! Persisted run artifacts: the JSON record and the CSV side files.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use bfvi::diagnostics::{KlEstimate, PsisReport};
use bfvi::models::Constraint;
use bfvi::vi::FamilyKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const RECORD_FILE: &str = "report.json";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const CHAINS_FILE: &str = "chains.csv";

/// Everything a run produced, minus the bulky sample and trace tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    /// Hash over the configuration and the data bytes, see [`content_hash`].
    pub input_hash: String,
    pub param_names: Vec<String>,
    /// Constraint of each column of `samples.csv`.
    pub constraints: Vec<Constraint>,
    pub failed: bool,
    pub failure: Option<String>,
    pub fit: Option<FitSummary>,
    pub mcmc: Option<McmcSummary>,
    pub psis: Option<PsisReport>,
    /// KL to a closed-form posterior.
    pub kl_vs_analytic: Option<KlEstimate>,
    /// KL through the (quadrature) log evidence.
    pub kl_via_evidence: Option<KlEstimate>,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub family: FamilyKind,
    /// Trained variational parameters.
    pub params: Vec<f64>,
    pub steps_completed: usize,
    /// Mean ELBO over the last tenth of the trace; `None` for an empty trace.
    pub final_elbo: Option<f64>,
    pub clipped_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcSummary {
    pub chains: usize,
    pub acceptance_rate: Vec<f64>,
    /// Per unconstrained dimension.
    pub split_rhat: Vec<f64>,
    pub ess: Vec<f64>,
    /// Quantities the trust gate is evaluated on, and their R̂.
    pub gate_quantity: String,
    pub gate_rhat: Vec<f64>,
    pub ground_truth_ready: bool,
    /// Per-chain fraction of draws with a positive parameter (`p = 1` only).
    pub positive_fraction: Option<Vec<f64>>,
}

/// Wall-clock bookkeeping; the only part of a record that differs between
/// identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix: f64,
    pub finished_unix: f64,
    pub wall_time_s: f64,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Git-style digest: each input is framed as `blob <len>\0<bytes>` before
/// being fed to SHA-256, so concatenation boundaries are unambiguous.
pub fn content_hash(config: &ExperimentConfig, data_digest: &str) -> String {
    let mut snapshot = config.clone();
    // where the output goes does not change what is computed
    snapshot.out_dir = Default::default();
    let config_json = serde_json::to_vec(&snapshot).expect("config serializes");
    let mut hasher = Sha256::new();
    for part in [config_json.as_slice(), data_digest.as_bytes()] {
        hasher.update(format!("blob {}\0", part.len()));
        hasher.update(part);
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `bytes` to a temporary file in the target directory, then renames
/// it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

impl RunRecord {
    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let json = serde_json::to_vec_pretty(self).expect("record serializes");
        write_atomic(&dir.join(RECORD_FILE), &json)
    }

    pub fn load(dir: &Path) -> Result<RunRecord, CliError> {
        let path = dir.join(RECORD_FILE);
        let text = fs::read_to_string(&path).map_err(|e| CliError::Config(format!("missing run {}: {e}", dir.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Renders a header plus rows as CSV.
pub fn csv_bytes<'a>(header: &[String], rows: impl Iterator<Item = Vec<f64>> + 'a) -> Vec<u8> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header).expect("in-memory write");
    for row in rows {
        writer
            .write_record(row.iter().map(|v| v.to_string()))
            .expect("in-memory write");
    }
    writer.into_inner().expect("in-memory flush")
}

/// Column names and row-major values of a numeric CSV file.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let row = record
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        rows.push(row);
    }
    Ok((header, rows))
}
