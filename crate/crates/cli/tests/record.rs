use std::path::PathBuf;

use bfvi::diagnostics::{KlEstimate, PsisReport, Verdict};
use bfvi::models::Constraint;
use bfvi::vi::{FamilyKind, TrainConfig};
use bfvi_cli::config::ExperimentConfig;
use bfvi_cli::record::{content_hash, FitSummary, McmcSummary, RunRecord, Timing};
use bfvi_cli::registry::{Experiment, Method};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, -1e-300f64..1e-300, Just(0.0), Just(f64::MAX), Just(f64::MIN_POSITIVE)]
}

fn config() -> impl Strategy<Value = ExperimentConfig> {
    (
        0usize..7,
        0usize..3,
        1usize..300,
        any::<u64>(),
        prop::option::of(1usize..1000),
        1e-6f64..1.0,
    )
        .prop_map(|(e, m, order, seed, batch, lr)| ExperimentConfig {
            experiment: Experiment::ALL[e],
            method: [Method::Bfvi, Method::Mfgauss, Method::Mcmc][m],
            order,
            train: TrainConfig {
                seed,
                batch,
                lr,
                ..TrainConfig::default()
            },
            data: Some(PathBuf::from(format!("data/{seed}.csv"))),
            out_dir: PathBuf::from("runs/x"),
            diag_samples: 5000,
            kl_samples: 10_000,
            bnn_sigma: 0.2,
            chains: 4,
            warmup: 100,
            iters: 100,
            thin: 1,
        })
}

fn record() -> impl Strategy<Value = RunRecord> {
    (
        config(),
        prop::collection::vec(finite(), 0..20),
        prop::option::of(finite()),
        prop_oneof![finite(), Just(f64::INFINITY)],
        prop::collection::vec(1.0f64..2.0, 1..5),
        any::<bool>(),
    )
        .prop_map(|(config, params, final_elbo, k_hat, rhat, failed)| RunRecord {
            input_hash: content_hash(&config, "abc"),
            config,
            param_names: vec!["a".into(), "b".into()],
            constraints: vec![Constraint::Identity, Constraint::Exp],
            failed,
            failure: failed.then(|| "diverged".into()),
            fit: Some(FitSummary {
                family: FamilyKind::Bfvi,
                steps_completed: params.len(),
                params,
                final_elbo,
                clipped_steps: 3,
            }),
            mcmc: Some(McmcSummary {
                chains: rhat.len(),
                acceptance_rate: vec![0.23; rhat.len()],
                split_rhat: rhat.clone(),
                ess: vec![100.5; rhat.len()],
                gate_quantity: "unconstrained parameters".into(),
                gate_rhat: rhat,
                ground_truth_ready: false,
                positive_fraction: None,
            }),
            psis: Some(PsisReport {
                k_hat,
                tail_count: 213,
                samples: 5000,
                verdict: Verdict::from_k_hat(k_hat),
            }),
            kl_vs_analytic: Some(KlEstimate { kl: 0.01, std_error: 1e-3 }),
            kl_via_evidence: None,
            timing: Timing {
                started_unix: 1.7e9,
                finished_unix: 1.7e9 + 1.5,
                wall_time_s: 1.5,
            },
        })
}

proptest! {
    #[test]
    fn records_round_trip_through_json(r in record()) {
        let text = serde_json::to_string_pretty(&r).unwrap();
        let back: RunRecord = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, r);
    }

    #[test]
    fn hash_ignores_output_location_only(c in config()) {
        let mut moved = c.clone();
        moved.out_dir = PathBuf::from("elsewhere");
        prop_assert_eq!(content_hash(&c, "d"), content_hash(&moved, "d"));
        prop_assert_ne!(content_hash(&c, "d"), content_hash(&c, "e"));
        let mut reseeded = c.clone();
        reseeded.train.seed ^= 1;
        prop_assert_ne!(content_hash(&c, "d"), content_hash(&reseeded, "d"));
    }
}
