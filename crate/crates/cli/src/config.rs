//! Resolution of flags, config files, environment and registry defaults
//! into one [`ExperimentConfig`].
//!
//! Precedence, highest first: command-line flag, config file, registry
//! default. The output root falls back to `$BFVI_OUT`, then `./runs`.

use std::fs;
use std::path::{Path, PathBuf};

use bfvi::diagnostics::DEFAULT_DIAGNOSTIC_SAMPLES;
use bfvi::models::BnnRegression;
use bfvi::vi::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::registry::{Experiment, Method};
use crate::CliError;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "BFVI_OUT";
pub const DEFAULT_OUT: &str = "runs";
pub const DEFAULT_SEED: u64 = 1;
/// Draws used by the KL estimators.
pub const DEFAULT_KL_SAMPLES: usize = 10_000;
/// Posterior draws written to `samples.csv`.
pub const SAMPLE_BANK_SIZE: usize = 5000;

/// Every setting that may come from a flag or a config file. Config files
/// use the same keys as the long flags (`M`, `S`, `epochs`, …).
#[derive(Debug, Clone, Default, PartialEq, clap::Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Registered experiment name.
    #[arg(long)]
    pub experiment: Option<String>,
    /// bfvi, mfgauss or mcmc.
    #[arg(long)]
    pub method: Option<String>,
    /// Bernstein polynomial order.
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub order: Option<usize>,
    /// Monte-Carlo samples per training step.
    #[arg(long = "S")]
    #[serde(rename = "S")]
    pub samples: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Likelihood rows per step.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Gradient-norm cap; 0 disables clipping.
    #[arg(long)]
    #[serde(alias = "clip-norm")]
    pub clip_norm: Option<f64>,
    /// Data file replacing the bundled one.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output root directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run directory name under the output root.
    #[arg(long)]
    pub name: Option<String>,
    /// Draws for the PSIS diagnostic.
    #[arg(long)]
    #[serde(alias = "diag-samples")]
    pub diag_samples: Option<usize>,
    /// Draws for the KL estimators.
    #[arg(long)]
    #[serde(alias = "kl-samples")]
    pub kl_samples: Option<usize>,
    /// Known noise sd of the network regression.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Kept draws per chain.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Comma-separated polynomial orders for `sweep-m`.
    #[arg(long)]
    #[serde(alias = "m-list")]
    pub m_list: Option<String>,
    #[arg(long)]
    pub replicates: Option<usize>,
}

macro_rules! layer {
    ($self:ident, $other:ident; $($field:ident),*) => {
        Overrides { $($field: $self.$field.or($other.$field)),* }
    };
}

impl Overrides {
    /// Fields set in `self`, falling back to `other`.
    pub fn or(self, other: Overrides) -> Overrides {
        layer!(self, other; experiment, method, order, samples, epochs, seed, lr, batch, clip_norm, data, out,
            name, diag_samples, kl_samples, sigma, chains, iters, warmup, thin, m_list, replicates)
    }

    /// Reads a JSON object or `key = value` lines (`#` starts a comment).
    pub fn from_file(path: &Path) -> Result<Overrides, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_str_any(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }

    pub fn from_str_any(text: &str) -> Result<Overrides, String> {
        let value = if text.trim_start().starts_with('{') {
            serde_json::from_str::<Value>(text).map_err(|e| e.to_string())?
        } else {
            let mut map = Map::new();
            for (i, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
                map.insert(key.trim().to_string(), scalar(value.trim()));
            }
            Value::Object(map)
        };
        serde_json::from_value(value).map_err(|e| e.to_string())
    }
}

/// Numbers stay numbers; everything else is a string.
fn scalar(text: &str) -> Value {
    if let Ok(n) = text.parse::<u64>() {
        return n.into();
    }
    match text.parse::<f64>() {
        Ok(x) if x.is_finite() => x.into(),
        _ => Value::String(text.to_string()),
    }
}

/// A fully resolved run configuration, stored verbatim in every record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub method: Method,
    pub order: usize,
    pub train: TrainConfig,
    pub data: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub diag_samples: usize,
    pub kl_samples: usize,
    pub bnn_sigma: f64,
    pub chains: usize,
    pub warmup: usize,
    pub iters: usize,
    pub thin: usize,
}

impl ExperimentConfig {
    /// Applies registry defaults beneath `o`. `default_method` is used when
    /// neither flags nor file name one.
    pub fn resolve(o: &Overrides, default_method: Method) -> Result<ExperimentConfig, CliError> {
        let name = o
            .experiment
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("--experiment is required; valid experiments: {}", Experiment::registry_names())))?;
        let experiment: Experiment = name.parse().map_err(|e: crate::registry::UnknownExperiment| CliError::Config(e.to_string()))?;
        let method = match &o.method {
            Some(m) => m.parse().map_err(CliError::Config)?,
            None => default_method,
        };
        let d = experiment.defaults();
        let seed = o.seed.unwrap_or(DEFAULT_SEED);
        let train = TrainConfig {
            samples: o.samples.unwrap_or(d.samples),
            epochs: o.epochs.unwrap_or(d.epochs),
            lr: o.lr.unwrap_or(TrainConfig::default().lr),
            clip_norm: match o.clip_norm {
                Some(c) if c == 0.0 => None,
                Some(c) => Some(c),
                None => TrainConfig::default().clip_norm,
            },
            batch: o.batch.or(d.batch),
            seed,
            ..TrainConfig::default()
        };
        train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let out_root = o
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        let config = ExperimentConfig {
            experiment,
            method,
            order: o.order.unwrap_or(d.order),
            train,
            data: o.data.clone(),
            out_dir: PathBuf::new(),
            diag_samples: o.diag_samples.unwrap_or(DEFAULT_DIAGNOSTIC_SAMPLES),
            kl_samples: o.kl_samples.unwrap_or(DEFAULT_KL_SAMPLES),
            bnn_sigma: o.sigma.unwrap_or(BnnRegression::DEFAULT_SIGMA),
            chains: o.chains.unwrap_or(d.chains),
            warmup: o.warmup.unwrap_or(d.warmup),
            iters: o.iters.unwrap_or(d.iters),
            thin: o.thin.unwrap_or(d.thin),
        };
        if config.order == 0 {
            return Err(CliError::Config("M must be at least 1".into()));
        }
        if config.diag_samples < 100 || config.kl_samples < 2 {
            return Err(CliError::Config("diagnostics need at least 100 draws".into()));
        }
        if let Some(path) = &config.data {
            if !path.is_file() {
                return Err(CliError::Config(format!("data file {} does not exist", path.display())));
            }
        }
        let dir_name = o.name.clone().unwrap_or_else(|| config.default_run_name());
        Ok(ExperimentConfig {
            out_dir: out_root.join(dir_name),
            ..config
        })
    }

    fn default_run_name(&self) -> String {
        let seed = self.train.seed;
        match self.method {
            Method::Bfvi => format!("{}_bfvi_M{}_seed{seed}", self.experiment, self.order),
            Method::Mfgauss | Method::Mcmc => format!("{}_{}_seed{seed}", self.experiment, self.method),
        }
    }
}

/// Parses `"1,2,5"` into orders.
pub fn parse_m_list(text: &str) -> Result<Vec<usize>, CliError> {
    let list: Vec<usize> = text
        .split(',')
        .map(|t| t.trim().parse::<usize>().ok().filter(|&m| m >= 1))
        .collect::<Option<_>>()
        .ok_or_else(|| CliError::Config(format!("invalid M list '{text}'")))?;
    if list.is_empty() {
        return Err(CliError::Config("empty M list".into()));
    }
    Ok(list)
}
