use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bfvi_cli::commands::{self, Moments};
use bfvi_cli::config::{ExperimentConfig, Overrides};
use bfvi_cli::ingest::{ingest, ingest_bundled, parse, sha256_hex, Schema};
use bfvi_cli::record::{read_table, RunRecord, SAMPLES_FILE};
use bfvi_cli::registry::{Experiment, Method};
use bfvi_cli::CliError;

fn bfvi(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bfvi"))
        .args(args)
        .env("BFVI_OUT", out)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn overrides(experiment: &str, out: &Path) -> Overrides {
    Overrides {
        experiment: Some(experiment.into()),
        out: Some(out.to_path_buf()),
        ..Overrides::default()
    }
}

#[test]
fn bernoulli_fit_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["fit", "--experiment", "bernoulli", "--method", "bfvi", "--M", "10", "--seed", "1"];
    let first = bfvi(&args, tmp.path());
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let dir = tmp.path().join("bernoulli_bfvi_M10_seed1");
    let record = RunRecord::load(&dir).unwrap();
    assert!(record.kl_vs_analytic.unwrap().kl < 0.05);
    assert!(record.psis.is_some());
    assert_eq!(record.fit.as_ref().unwrap().steps_completed, 1000);

    let (header, rows) = read_table(&dir.join(SAMPLES_FILE)).unwrap();
    assert_eq!(header, ["pi"]);
    assert_eq!(rows.len(), 5000);
    assert!(rows.iter().all(|r| r[0] > 0.0 && r[0] < 1.0));
    let (_, trace) = read_table(&dir.join("trace.csv")).unwrap();
    assert_eq!(trace.len(), 1000);

    let samples = fs::read(dir.join(SAMPLES_FILE)).unwrap();
    let again = bfvi(&args, tmp.path());
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(samples, fs::read(dir.join(SAMPLES_FILE)).unwrap());
    let rerun = RunRecord::load(&dir).unwrap();
    assert_eq!(rerun.input_hash, record.input_hash);
    assert_eq!(rerun.fit, record.fit);
    assert_eq!(rerun.psis, record.psis);
}

#[test]
fn unknown_experiment_lists_registry() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bfvi(&["fit", "--experiment", "nope"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    for e in Experiment::ALL {
        assert!(msg.contains(e.name()), "{msg}");
    }
}

#[test]
fn invalid_settings_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        vec!["fit", "--experiment", "bernoulli", "--S", "0"],
        vec!["fit", "--experiment", "bernoulli", "--method", "laplace"],
        vec!["fit", "--experiment", "bernoulli", "--data", "/no/such/file.csv"],
        vec!["fit", "--experiment", "bernoulli", "--bogus-flag"],
        vec!["mcmc", "--experiment", "bernoulli", "--chains", "1"],
        vec!["sweep-m", "--experiment", "toy_linreg"],
        vec!["compare", "--experiment", "bernoulli", "--runs", "missing", "--against", "analytic"],
    ] {
        let out = bfvi(&args, tmp.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn divergence_exits_3_and_keeps_the_record() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bfvi(&["fit", "--experiment", "bernoulli", "--lr", "1e300", "--epochs", "5"], tmp.path());
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    let record = RunRecord::load(&tmp.path().join("bernoulli_bfvi_M10_seed1")).unwrap();
    assert!(record.failed);
    assert!(record.failure.unwrap().contains("diverged"));
}

#[test]
fn bernoulli_mcmc_passes_gate() {
    let tmp = tempfile::tempdir().unwrap();
    let record = commands::mcmc(&Overrides {
        chains: Some(4),
        iters: Some(20_000),
        ..overrides("bernoulli", tmp.path())
    })
    .unwrap();
    let m = record.mcmc.unwrap();
    assert!(m.ground_truth_ready);
    let (_, rows) = read_table(&record.config.out_dir.join(SAMPLES_FILE)).unwrap();
    assert_eq!(rows.len(), 80_000);
    let mean = rows.iter().map(|r| r[0]).sum::<f64>() / rows.len() as f64;
    assert!((mean - 0.7381).abs() <= 0.01);
    let (header, chains) = read_table(&record.config.out_dir.join("chains.csv")).unwrap();
    assert_eq!(header, ["chain", "draw", "logit_pi", "log_joint"]);
    assert_eq!(chains.len(), 80_000);
}

#[test]
fn cauchy_chains_visit_both_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let record = commands::mcmc(&overrides("cauchy", tmp.path())).unwrap();
    for share in record.mcmc.unwrap().positive_fraction.unwrap() {
        assert!(share > 0.1 && share < 0.9, "{share}");
    }
}

#[test]
fn failed_gate_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    // far too short for the hierarchical funnel to mix
    let out = bfvi(
        &["mcmc", "--experiment", "eight_schools_cp", "--warmup", "10", "--iters", "40", "--thin", "1"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    let record = RunRecord::load(&tmp.path().join("eight_schools_cp_mcmc_seed1")).unwrap();
    assert!(!record.mcmc.unwrap().ground_truth_ready);
}

#[test]
fn comparing_a_run_with_itself_gives_zero_deltas() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Overrides {
        epochs: Some(200),
        ..overrides("bernoulli", tmp.path())
    };
    let record = commands::fit(&o).unwrap();
    let name = record.config.out_dir.file_name().unwrap().to_string_lossy().into_owned();
    let report = commands::compare(&o, std::slice::from_ref(&name), &name).unwrap();
    for m in &report.runs[0].marginals {
        assert_eq!(m.delta, Moments { mean: 0.0, sd: 0.0, skewness: 0.0 });
    }
    let pairs = tmp.path().join("bernoulli_compare").join(&report.runs[0].pairs_file);
    let (header, rows) = read_table(&pairs).unwrap();
    assert_eq!(header, ["source", "pi"]);
    assert_eq!(rows.len(), 10_000);
}

#[test]
fn compare_against_analytic_bernoulli() {
    let tmp = tempfile::tempdir().unwrap();
    let o = overrides("bernoulli", tmp.path());
    let bf = commands::fit(&o).unwrap();
    let mf = commands::fit(&Overrides {
        method: Some("mfgauss".into()),
        ..o.clone()
    })
    .unwrap();
    let names: Vec<String> = [&bf, &mf]
        .iter()
        .map(|r| r.config.out_dir.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let report = commands::compare(&o, &names, "analytic").unwrap();
    assert_eq!(report.runs.len(), 2);
    // Beta(3.1, 1.1): mean 0.7381, sd 0.1961
    let reference = report.runs[0].marginals[0].reference;
    assert!((reference.mean - 3.1 / 4.2).abs() < 0.01);
    assert!((reference.sd - (3.1f64 * 1.1 / (4.2 * 4.2 * 5.2)).sqrt()).abs() < 0.01);
    assert!(report.runs[0].marginals[0].delta.mean.abs() < 0.01);
    assert!(report.runs[0].kl_vs_analytic.unwrap().kl < report.runs[1].kl_vs_analytic.unwrap().kl);
    assert!(matches!(
        commands::compare(&overrides("toy_linreg", tmp.path()), &names, "analytic"),
        Err(CliError::Config(_))
    ));
}

#[test]
fn sweep_writes_long_format() {
    let tmp = tempfile::tempdir().unwrap();
    let summary = commands::sweep_m(&Overrides {
        m_list: Some("1,3".into()),
        replicates: Some(2),
        epochs: Some(100),
        kl_samples: Some(500),
        ..overrides("bernoulli", tmp.path())
    })
    .unwrap();
    assert_eq!(summary.rows.len(), 4);
    assert_eq!(summary.levels.iter().map(|l| l.order).collect::<Vec<_>>(), [1, 3]);
    assert!(summary.loglog_slope.is_some());
    let (header, rows) = read_table(&tmp.path().join("bernoulli_sweep").join("sweep.csv")).unwrap();
    assert_eq!(header, ["M", "replicate", "seed", "KL"]);
    assert_eq!(rows[0][..3], [1.0, 0.0, 1.0]);
    assert_eq!(rows[3][..3], [3.0, 1.0, 2.0]);
}

#[test]
fn config_files_and_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let json = tmp.path().join("run.json");
    fs::write(&json, r#"{"experiment": "toy_linreg", "M": 7, "epochs": 50, "clip-norm": 0}"#).unwrap();
    let kv = tmp.path().join("run.conf");
    fs::write(&kv, "# toy settings\nexperiment = toy_linreg\nM = 7\nepochs=50\nclip_norm = 0\n").unwrap();
    let from_json = Overrides::from_file(&json).unwrap();
    assert_eq!(from_json, Overrides::from_file(&kv).unwrap());

    let flags = Overrides {
        epochs: Some(60),
        ..Overrides::default()
    };
    let config = ExperimentConfig::resolve(&flags.or(from_json), Method::Bfvi).unwrap();
    assert_eq!(config.order, 7);
    assert_eq!(config.train.epochs, 60);
    assert_eq!(config.train.samples, 600);
    assert_eq!(config.train.clip_norm, None);
    assert!(Overrides::from_str_any("unknown_key = 3").is_err());

    let out = bfvi(&["fit", "--config", json.to_str().unwrap(), "--epochs", "20"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let record = RunRecord::load(&tmp.path().join("toy_linreg_bfvi_M7_seed1")).unwrap();
    assert_eq!(record.fit.unwrap().steps_completed, 20);
}

#[test]
fn registry_defaults() {
    let table = [
        (Experiment::Bernoulli, 10, 1000, 1000, None),
        (Experiment::Cauchy, 50, 10_000, 1000, None),
        (Experiment::ToyLinreg, 10, 600, 15_000, None),
        (Experiment::EightSchoolsCp, 50, 10, 15_000, None),
        (Experiment::EightSchoolsNcp, 50, 10, 15_000, None),
        (Experiment::BnnRegression, 50, 600, 20_000, None),
        (Experiment::Diamonds, 50, 10, 30_000, Some(512)),
    ];
    for (e, order, samples, epochs, batch) in table {
        let d = e.defaults();
        assert_eq!((d.order, d.samples, d.epochs, d.batch), (order, samples, epochs, batch), "{e}");
        assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        let tmp = tempfile::tempdir().unwrap();
        let config = ExperimentConfig::resolve(&overrides(e.name(), tmp.path()), Method::Bfvi).unwrap();
        assert_eq!(config.train.samples, samples);
        assert_eq!(config.bnn_sigma, 0.2);
    }
}

#[test]
fn output_root_comes_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bfvi(&["fit", "--experiment", "bernoulli", "--epochs", "10", "--name", "quick"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(tmp.path().join("quick").join("report.json").is_file());
}

#[test]
fn record_round_trips_through_json() {
    let tmp = tempfile::tempdir().unwrap();
    let record = commands::fit(&Overrides {
        epochs: Some(100),
        ..overrides("cauchy", tmp.path())
    })
    .unwrap();
    let text = serde_json::to_string(&record).unwrap();
    let back: RunRecord = serde_json::from_str(&text).unwrap();
    assert_eq!(back, record);
    assert!(record.kl_via_evidence.is_some());
}

#[test]
fn bundled_examples() {
    let (cauchy, _) = ingest_bundled("cauchy.csv", Experiment::Cauchy.schema()).unwrap();
    assert_eq!(cauchy.n_rows(), 6);
    assert_eq!(cauchy.column("y").unwrap()[0], 1.2083935);
    let (toy, _) = ingest_bundled("toy_linreg.csv", Experiment::ToyLinreg.schema()).unwrap();
    assert_eq!(toy.n_rows(), 6);
    assert_eq!(toy.column("x1").unwrap()[0], 1.3709584);
    let (bnn, _) = ingest_bundled("bnn_regression.csv", Experiment::BnnRegression.schema()).unwrap();
    assert_eq!(bnn.n_rows(), 9);
    for e in Experiment::ALL {
        assert!(ingest_bundled(e.data_file(), e.schema()).is_ok(), "{e}");
    }
}

#[test]
fn schema_errors_name_the_column() {
    let err = parse("x1,x2,y\n1,2,3\n4,5\n", Schema::Csv(&["x1", "x2", "y"]), "t.csv").unwrap_err();
    assert!(err.to_string().contains("'y'"), "{err}");
    let err = parse("x1,y\n1,2\n", Schema::Csv(&["x1", "x2", "y"]), "t.csv").unwrap_err();
    assert!(err.to_string().contains("'x2'"), "{err}");
    assert!(parse(r#"{"y": [1, 2], "sigma": [1]}"#, Schema::EightSchoolsJson, "s.json").is_err());
}

#[test]
fn checksums_guard_data_files() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("cauchy.csv");
    let text = "y\n1.0\n-1.0\n";
    fs::write(&file, text).unwrap();
    fs::write(tmp.path().join("SHA256SUMS"), format!("{}  cauchy.csv\n", sha256_hex(text.as_bytes()))).unwrap();
    assert!(ingest(&file, Schema::Csv(&["y"])).is_ok());
    fs::write(&file, "y\n2.0\n").unwrap();
    assert!(ingest(&file, Schema::Csv(&["y"])).unwrap_err().to_string().contains("checksum"));
    let out = bfvi(&["fit", "--experiment", "cauchy", "--data", file.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));

    let truncated = tmp.path().join("toy.csv");
    fs::write(&truncated, "x1,x2,y\n1,2,3\n4,5\n").unwrap();
    let out = bfvi(&["fit", "--experiment", "toy_linreg", "--data", truncated.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("'y'"), "{}", stderr(&out));
}

#[test]
fn method_names_parse() {
    for m in [Method::Bfvi, Method::Mfgauss, Method::Mcmc] {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
}
