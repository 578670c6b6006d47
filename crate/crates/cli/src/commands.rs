//! The subcommands, as library functions returning their record or report.

use std::path::{Path, PathBuf};

use bfvi::diagnostics::{kl_vs_analytic, kl_via_evidence, psis_khat, KlEstimate};
use bfvi::models::{BnnRegression, Constraint, Dataset, Model, ProbabilisticModel};
use bfvi::reference::{
    analytic_beta_posterior, chain_diagnostics, grid_posterior_1d, rwm_sample, scalar_diagnostics, McmcChain,
    RwmConfig,
};
use bfvi::vi::{sample_posterior, train, FamilySpec, FitResult, VariationalFamily};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{parse_m_list, ExperimentConfig, Overrides, DEFAULT_OUT, OUT_ENV, SAMPLE_BANK_SIZE};
use crate::ingest::{ingest, ingest_bundled};
use crate::record::*;
use crate::registry::{Experiment, Method};
use crate::CliError;

/// R̂ threshold for trusting a reference chain.
pub const RHAT_GATE: f64 = 1.01;
/// Points of the x-grid on which network predictions are compared.
pub const PREDICTIVE_GRID_POINTS: usize = 50;

/// Independent RNG streams derived from one seed.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Samples = 1,
    Psis = 2,
    Kl = 3,
    Reference = 4,
}

fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Reads the configured or bundled data; returns it with its SHA-256.
pub fn load_data(config: &ExperimentConfig) -> Result<(Dataset, String), CliError> {
    let e = config.experiment;
    let loaded = match &config.data {
        Some(path) => ingest(path, e.schema()),
        None => ingest_bundled(e.data_file(), e.schema()),
    };
    loaded.map_err(|err| CliError::Config(err.to_string()))
}

fn build_model(config: &ExperimentConfig, data: &Dataset) -> Result<Model, CliError> {
    config
        .experiment
        .build_model(data, config.bnn_sigma)
        .map_err(|e| CliError::Config(e.to_string()))
}

fn family_spec(config: &ExperimentConfig) -> FamilySpec {
    match config.method {
        Method::Mfgauss => FamilySpec::MeanField,
        _ => FamilySpec::bernstein(config.order),
    }
}

/// Unconstrained coordinate names: `log_σ`, `logit_π`, …
pub fn unconstrained_names(model: &impl ProbabilisticModel) -> Vec<String> {
    model
        .param_names()
        .into_iter()
        .zip(model.constraints())
        .map(|(name, c)| match c {
            Constraint::Identity => name,
            Constraint::Exp => format!("log_{name}"),
            Constraint::Sigmoid => format!("logit_{name}"),
        })
        .collect()
}

fn fresh_record(config: &ExperimentConfig, digest: &str, model: &Model, started: f64) -> RunRecord {
    RunRecord {
        config: config.clone(),
        input_hash: content_hash(config, digest),
        param_names: model.param_names(),
        constraints: model.constraints(),
        failed: false,
        failure: None,
        fit: None,
        mcmc: None,
        psis: None,
        kl_vs_analytic: None,
        kl_via_evidence: None,
        timing: Timing {
            started_unix: started,
            finished_unix: 0.0,
            wall_time_s: 0.0,
        },
    }
}

fn finish(record: &mut RunRecord) {
    record.timing.finished_unix = unix_now();
    record.timing.wall_time_s = record.timing.finished_unix - record.timing.started_unix;
}

fn fit_summary(fit: &FitResult) -> FitSummary {
    let trace = &fit.elbo_trace;
    let tail = &trace[trace.len() - trace.len().div_ceil(10)..];
    FitSummary {
        family: fit.family.kind(),
        params: fit.family.params(),
        steps_completed: trace.len(),
        final_elbo: (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64),
        clipped_steps: fit.clipped_steps.len(),
    }
}

fn trace_csv(trace: &[f64]) -> Vec<u8> {
    csv_bytes(
        &["step".into(), "elbo".into()],
        trace.iter().enumerate().map(|(i, &e)| vec![i as f64, e]),
    )
}

/// KL estimates available for `model`: against the closed-form posterior
/// and through the log evidence.
pub fn kl_estimates(
    family: &VariationalFamily,
    model: &Model,
    samples: usize,
    seed: u64,
) -> (Option<KlEstimate>, Option<KlEstimate>) {
    let origin = vec![0.0; model.dim()];
    let analytic = model.analytic_log_posterior(&origin).map(|_| {
        kl_vs_analytic(
            family,
            |u| model.analytic_log_posterior(u).expect("closed form checked above"),
            samples,
            &mut rng_for(seed, Stream::Kl),
        )
    });
    let evidence = model
        .analytic_log_evidence()
        .map(|log_z| kl_via_evidence(family, model, log_z, samples, &mut rng_for(seed, Stream::Kl)));
    (analytic, evidence)
}

/// `fit`: trains a variational family, or runs chains for `--method mcmc`.
pub fn fit(o: &Overrides) -> Result<RunRecord, CliError> {
    let config = ExperimentConfig::resolve(o, Method::Bfvi)?;
    if config.method == Method::Mcmc {
        return run_mcmc(config);
    }
    let (data, digest) = load_data(&config)?;
    let model = build_model(&config, &data)?;
    let mut record = fresh_record(&config, &digest, &model, unix_now());
    let dir = &config.out_dir;
    let fit = match train(&model, &family_spec(&config), &config.train) {
        Ok(fit) => fit,
        Err(err) if matches!(err.source, bfvi::Error::Config(_)) => return Err(CliError::Config(err.source.to_string())),
        Err(err) => {
            record.failed = true;
            record.failure = Some(err.to_string());
            record.fit = Some(fit_summary(&err.partial));
            finish(&mut record);
            write_atomic(&dir.join(TRACE_FILE), &trace_csv(&err.partial.elbo_trace))?;
            record.save(dir)?;
            return Err(CliError::Diverged(err.to_string()));
        }
    };
    let seed = config.train.seed;
    let bank = sample_posterior(&fit.family, SAMPLE_BANK_SIZE, &mut rng_for(seed, Stream::Samples));
    let rows = (0..bank.len()).map(|s| model.constrain(bank.theta(s)));
    write_atomic(&dir.join(SAMPLES_FILE), &csv_bytes(&model.param_names(), rows))?;
    write_atomic(&dir.join(TRACE_FILE), &trace_csv(&fit.elbo_trace))?;

    record.psis = psis_khat(&fit.family, &model, config.diag_samples, &mut rng_for(seed, Stream::Psis)).ok();
    (record.kl_vs_analytic, record.kl_via_evidence) = kl_estimates(&fit.family, &model, config.kl_samples, seed);
    record.fit = Some(fit_summary(&fit));
    finish(&mut record);
    record.save(dir)?;
    Ok(record)
}

/// `mcmc`: adaptive random-walk chains plus the R̂ trust gate.
pub fn mcmc(o: &Overrides) -> Result<RunRecord, CliError> {
    let mut config = ExperimentConfig::resolve(o, Method::Mcmc)?;
    if config.method != Method::Mcmc {
        return Err(CliError::Config(format!("the mcmc command does not run method {}", config.method)));
    }
    config.method = Method::Mcmc;
    run_mcmc(config)
}

/// Evenly spaced inputs spanning the network regression data.
pub fn predictive_grid(data: &Dataset) -> Vec<f64> {
    let x = data.column("x").unwrap_or(&[]);
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = PREDICTIVE_GRID_POINTS;
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn run_mcmc(config: ExperimentConfig) -> Result<RunRecord, CliError> {
    if config.chains < 2 {
        return Err(CliError::Config(format!(
            "at least 2 chains are required for R̂, got {}",
            config.chains
        )));
    }
    if config.iters < 4 || config.thin == 0 {
        return Err(CliError::Config("need at least 4 kept draws per chain and thinning ≥ 1".into()));
    }
    let (data, digest) = load_data(&config)?;
    let model = build_model(&config, &data)?;
    let (target, to_model) = config
        .experiment
        .mcmc_target(&data, config.bnn_sigma)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut record = fresh_record(&config, &digest, &model, unix_now());
    let seed = config.train.seed;
    let chains: Vec<McmcChain> = (0..config.chains as u64)
        .into_par_iter()
        .map(|c| {
            let rwm = RwmConfig {
                n_warmup: config.warmup,
                n_kept: config.iters,
                thinning: config.thin,
                seed: seed + c,
            };
            rwm_sample(&target, &rwm).map(|mut chain| {
                chain.draws = chain.draws.chunks(chain.p).flat_map(to_model).collect();
                chain
            })
        })
        .collect::<bfvi::Result<_>>()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let diag = chain_diagnostics(&chains).map_err(|e| CliError::Config(e.to_string()))?;

    let (gate_quantity, gate_rhat) = match (&model, config.experiment) {
        // Hidden units can swap places, so individual weights need not
        // mix even when the regression function does.
        (Model::Bnn(bnn), Experiment::BnnRegression) => {
            let rhat = predictive_grid(&data)
                .iter()
                .map(|&x| {
                    let series: Vec<Vec<f64>> = chains
                        .iter()
                        .map(|c| (0..c.n_kept).map(|i| bnn.predict(c.draw(i), x)).collect())
                        .collect();
                    scalar_diagnostics(&series).0
                })
                .collect();
            ("predictive mean on the x-grid".to_string(), rhat)
        }
        _ => ("unconstrained parameters".to_string(), diag.split_rhat.clone()),
    };
    let ready = gate_rhat.iter().all(|&r| r < RHAT_GATE);
    record.mcmc = Some(McmcSummary {
        chains: chains.len(),
        acceptance_rate: chains.iter().map(|c| c.acceptance_rate).collect(),
        split_rhat: diag.split_rhat,
        ess: diag.ess,
        gate_quantity,
        gate_rhat,
        ground_truth_ready: ready,
        positive_fraction: (model.dim() == 1)
            .then(|| chains.iter().map(|c| c.draws.iter().filter(|&&u| u > 0.0).count() as f64 / c.n_kept as f64).collect()),
    });

    let dir = &config.out_dir;
    let mut header = vec!["chain".to_string(), "draw".to_string()];
    header.extend(unconstrained_names(&model));
    header.push("log_joint".into());
    let chain_rows = chains.iter().enumerate().flat_map(|(c, chain)| {
        (0..chain.n_kept).map(move |i| {
            let mut row = vec![c as f64, i as f64];
            row.extend_from_slice(chain.draw(i));
            row.push(chain.log_joint[i]);
            row
        })
    });
    write_atomic(&dir.join(CHAINS_FILE), &csv_bytes(&header, chain_rows))?;
    let pooled = chains
        .iter()
        .flat_map(|c| (0..c.n_kept).map(|i| model.constrain(c.draw(i))));
    write_atomic(&dir.join(SAMPLES_FILE), &csv_bytes(&model.param_names(), pooled))?;
    finish(&mut record);
    record.save(dir)?;
    if !ready {
        return Err(CliError::Gate(format!(
            "R̂ gate failed: max R̂ {:.4} ≥ {RHAT_GATE}",
            record.mcmc.as_ref().map_or(f64::NAN, |m| m.gate_rhat.iter().copied().fold(f64::NAN, f64::max))
        )));
    }
    Ok(record)
}

/// One line of the sweep table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub order: usize,
    pub replicate: usize,
    pub seed: u64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepLevel {
    pub order: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    /// Replicates whose training finished.
    pub finished: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config: ExperimentConfig,
    pub levels: Vec<SweepLevel>,
    /// Least-squares slope of `log median KL` on `log M` over `M ≤ 10`.
    pub loglog_slope: Option<f64>,
    pub rows: Vec<SweepRow>,
}

/// Order statistic by linear interpolation, `q ∈ [0, 1]`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (i, t) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - t) + sorted[i + 1] * t
    } else {
        sorted[i]
    }
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Largest order included in the log-log slope; beyond it the optimizer's
/// noise floor dominates.
pub const SLOPE_MAX_ORDER: usize = 10;

pub fn summarize_sweep(rows: &[SweepRow], orders: &[usize]) -> (Vec<SweepLevel>, Option<f64>) {
    let levels: Vec<SweepLevel> = orders
        .iter()
        .map(|&m| {
            let mut kl: Vec<f64> = rows
                .iter()
                .filter(|r| r.order == m && r.kl.is_finite())
                .map(|r| r.kl)
                .collect();
            kl.sort_by(f64::total_cmp);
            SweepLevel {
                order: m,
                median: quantile(&kl, 0.5),
                q25: quantile(&kl, 0.25),
                q75: quantile(&kl, 0.75),
                finished: kl.len(),
            }
        })
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = levels
        .iter()
        .filter(|l| l.order <= SLOPE_MAX_ORDER && l.median > 0.0)
        .map(|l| ((l.order as f64).ln(), l.median.ln()))
        .unzip();
    let slope = (x.len() >= 2).then(|| ols_slope(&x, &y));
    (levels, slope)
}

/// `sweep-m`: KL against the exact posterior for several orders and seeds.
pub fn sweep_m(o: &Overrides) -> Result<SweepSummary, CliError> {
    let mut o = o.clone();
    if o.name.is_none() {
        o.name = o.experiment.as_ref().map(|e| format!("{e}_sweep"));
    }
    let config = ExperimentConfig::resolve(&o, Method::Bfvi)?;
    if !config.experiment.has_evidence() {
        return Err(CliError::Config(format!(
            "sweep-m needs a posterior with known evidence (bernoulli, cauchy), not {}",
            config.experiment
        )));
    }
    if config.method != Method::Bfvi {
        return Err(CliError::Config("sweep-m only varies the Bernstein order of bfvi".into()));
    }
    let orders = parse_m_list(o.m_list.as_deref().unwrap_or("1,2,5,10,20,30,50"))?;
    let replicates = o.replicates.unwrap_or(20);
    if replicates == 0 {
        return Err(CliError::Config("at least one replicate is required".into()));
    }
    let (data, _) = load_data(&config)?;
    let model = build_model(&config, &data)?;
    let jobs: Vec<(usize, usize)> = orders.iter().flat_map(|&m| (0..replicates).map(move |r| (m, r))).collect();
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(m, r)| {
            let seed = config.train.seed + r as u64;
            let train_config = bfvi::vi::TrainConfig {
                seed,
                ..config.train.clone()
            };
            let kl = match train(&model, &FamilySpec::bernstein(m), &train_config) {
                Ok(fit) => {
                    let (analytic, evidence) = kl_estimates(&fit.family, &model, config.kl_samples, seed);
                    analytic.or(evidence).map_or(f64::NAN, |k| k.kl)
                }
                Err(_) => f64::NAN,
            };
            SweepRow {
                order: m,
                replicate: r,
                seed,
                kl,
            }
        })
        .collect();
    let (levels, loglog_slope) = summarize_sweep(&rows, &orders);
    let header = ["M", "replicate", "seed", "KL"].map(String::from);
    let table = csv_bytes(
        &header,
        rows.iter().map(|r| vec![r.order as f64, r.replicate as f64, r.seed as f64, r.kl]),
    );
    write_atomic(&config.out_dir.join("sweep.csv"), &table)?;
    let summary = SweepSummary {
        config: config.clone(),
        levels,
        loglog_slope,
        rows,
    };
    write_atomic(
        &config.out_dir.join("summary.json"),
        &serde_json::to_vec_pretty(&summary).expect("summary serializes"),
    )?;
    Ok(summary)
}

/// Mean, standard deviation and skewness of one marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
    pub skewness: f64,
}

impl Moments {
    pub fn of(x: &[f64]) -> Moments {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
        Moments {
            mean,
            sd: (m2 * n / (n - 1.0)).sqrt(),
            skewness: if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 },
        }
    }

    fn minus(self, other: Moments) -> Moments {
        Moments {
            mean: self.mean - other.mean,
            sd: self.sd - other.sd,
            skewness: self.skewness - other.skewness,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalDelta {
    pub param: String,
    pub run: Moments,
    pub reference: Moments,
    /// `run − reference`.
    pub delta: Moments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunComparison {
    pub run: String,
    pub method: Method,
    /// `None` when the diagnostic was unavailable; `+∞` serializes as `null`
    /// inside the nested report.
    pub psis: Option<bfvi::diagnostics::PsisReport>,
    pub kl_vs_analytic: Option<KlEstimate>,
    pub kl_via_evidence: Option<KlEstimate>,
    pub marginals: Vec<MarginalDelta>,
    pub pairs_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub experiment: Experiment,
    pub against: String,
    pub reference_ready: Option<bool>,
    pub runs: Vec<RunComparison>,
}

fn out_root(o: &Overrides) -> PathBuf {
    o.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn resolve_run(root: &Path, run: &str) -> Result<PathBuf, CliError> {
    let direct = PathBuf::from(run);
    let path = if direct.join(RECORD_FILE).is_file() { direct } else { root.join(run) };
    if !path.join(RECORD_FILE).is_file() {
        return Err(CliError::Config(format!("run '{run}' not found (looked for {})", path.join(RECORD_FILE).display())));
    }
    Ok(path)
}

/// Draws from the exact posterior of `experiment`, in constrained space.
fn analytic_reference(experiment: Experiment, data: &Dataset, model: &Model) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rng = rng_for(0, Stream::Reference);
    match model {
        Model::Bernoulli(m) => {
            let post = analytic_beta_posterior(m.alpha0, m.beta0, data.column("y").unwrap_or(&[]))
                .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(post.sample(SAMPLE_BANK_SIZE, &mut rng).into_iter().map(|x| vec![x]).collect())
        }
        Model::Cauchy(m) => {
            let grid = grid_posterior_1d(m, -12.0, 12.0, 24_001).map_err(|e| CliError::Config(e.to_string()))?;
            Ok((0..SAMPLE_BANK_SIZE)
                .map(|_| {
                    let u: f64 = rng.random();
                    let i = grid.cdf.partition_point(|&c| c < u).clamp(1, grid.cdf.len() - 1);
                    let (c0, c1) = (grid.cdf[i - 1], grid.cdf[i]);
                    let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
                    vec![grid.nodes[i - 1] + t * (grid.nodes[i] - grid.nodes[i - 1])]
                })
                .collect())
        }
        _ => Err(CliError::Config(format!(
            "no analytic posterior for {experiment}; compare against an mcmc run"
        ))),
    }
}

/// `compare`: marginal moments of each run against a reference, plus
/// overlay files pairing the two sample sets.
pub fn compare(o: &Overrides, runs: &[String], against: &str) -> Result<CompareReport, CliError> {
    let root = out_root(o);
    let name = o.experiment.as_deref().ok_or_else(|| CliError::Config("--experiment is required".into()))?;
    let experiment: Experiment = name.parse().map_err(|e: crate::registry::UnknownExperiment| CliError::Config(e.to_string()))?;
    if runs.is_empty() {
        return Err(CliError::Config("--runs lists no runs".into()));
    }
    let run_dirs: Vec<PathBuf> = runs.iter().map(|r| resolve_run(&root, r)).collect::<Result<_, _>>()?;

    let (ref_header, ref_rows, reference_ready) = if against == "analytic" {
        let probe = ExperimentConfig::resolve(
            &Overrides {
                experiment: Some(name.into()),
                ..o.clone()
            },
            Method::Bfvi,
        )?;
        let (data, _) = load_data(&probe)?;
        let model = build_model(&probe, &data)?;
        (model.param_names(), analytic_reference(experiment, &data, &model)?, None)
    } else {
        let dir = resolve_run(&root, against)?;
        let record = RunRecord::load(&dir)?;
        let (header, rows) = read_table(&dir.join(SAMPLES_FILE))?;
        (header, rows, record.mcmc.map(|m| m.ground_truth_ready))
    };

    let dir_name = o.name.clone().unwrap_or_else(|| format!("{experiment}_compare"));
    let out_dir = root.join(dir_name);
    let mut report = CompareReport {
        experiment,
        against: against.to_string(),
        reference_ready,
        runs: Vec::new(),
    };
    for (label, dir) in runs.iter().zip(&run_dirs) {
        let record = RunRecord::load(dir)?;
        if record.config.experiment != experiment {
            return Err(CliError::Config(format!(
                "run '{label}' is a {} run, not {experiment}",
                record.config.experiment
            )));
        }
        let (header, rows) = read_table(&dir.join(SAMPLES_FILE))?;
        if header != ref_header {
            return Err(CliError::Config(format!("run '{label}' has columns {header:?}, reference has {ref_header:?}")));
        }
        let column = |rows: &[Vec<f64>], j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
        let marginals = header
            .iter()
            .enumerate()
            .map(|(j, param)| {
                let run = Moments::of(&column(&rows, j));
                let reference = Moments::of(&column(&ref_rows, j));
                MarginalDelta {
                    param: param.clone(),
                    run,
                    reference,
                    delta: run.minus(reference),
                }
            })
            .collect();
        let safe: String = label
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
            .collect();
        let pairs_file = format!("pairs_{safe}.csv");
        let mut pair_header = vec!["source".to_string()];
        pair_header.extend(header.iter().cloned());
        let tagged = rows
            .iter()
            .map(|r| (0.0, r))
            .chain(ref_rows.iter().map(|r| (1.0, r)))
            .map(|(tag, r)| std::iter::once(tag).chain(r.iter().copied()).collect());
        write_atomic(&out_dir.join(&pairs_file), &csv_bytes(&pair_header, tagged))?;
        report.runs.push(RunComparison {
            run: label.clone(),
            method: record.config.method,
            psis: record.psis,
            kl_vs_analytic: record.kl_vs_analytic,
            kl_via_evidence: record.kl_via_evidence,
            marginals,
            pairs_file,
        });
    }
    write_atomic(
        &out_dir.join("compare.json"),
        &serde_json::to_vec_pretty(&report).expect("report serializes"),
    )?;
    Ok(report)
}

/// Posterior-predictive mean of the network at each `x`, averaged over the
/// constrained draws in `rows`.
pub fn predictive_mean(model: &BnnRegression, rows: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&xi| rows.iter().map(|r| model.predict(r, xi)).sum::<f64>() / rows.len() as f64)
        .collect()
}
