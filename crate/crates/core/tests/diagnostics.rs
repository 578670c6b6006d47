use bfvi::autodiff::Scalar;
use bfvi::diagnostics::*;
use bfvi::models::*;
use bfvi::vi::*;
use bfvi::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Beta, Continuous};
use statrs::function::beta::ln_beta;
use statrs::statistics::{Data, Median};

fn gpd_sample(k: f64, sigma: f64, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            if k == 0.0 {
                -sigma * (1.0 - u).ln()
            } else {
                sigma / k * ((1.0 - u).powf(-k) - 1.0)
            }
        })
        .collect()
}

fn bernoulli() -> BernoulliBeta {
    BernoulliBeta::from_dataset(&bundled::bernoulli()).unwrap()
}

fn bernoulli_posterior_logit(u: f64) -> f64 {
    let pi = 1.0 / (1.0 + (-u).exp());
    Beta::new(3.1, 1.1).unwrap().ln_pdf(pi) + (pi * (1.0 - pi)).ln()
}

fn sample_skewness(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

#[test]
fn gpd_shape_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let k = fit_gpd_exceedances(&gpd_sample(0.4, 1.0, 4000, &mut rng)).unwrap().k_hat;
    assert!((0.3..=0.5).contains(&k), "k̂ {k}");
    let k = fit_gpd_exceedances(&gpd_sample(0.0, 1.0, 4000, &mut rng)).unwrap().k_hat;
    assert!((-0.1..=0.1).contains(&k), "k̂ {k}");
    assert!(matches!(fit_gpd_tail(&[2.5; 4000]), Err(Error::DegenerateTail(_))));
    assert!(matches!(fit_gpd_exceedances(&[0.0; 100]), Err(Error::DegenerateTail(_))));
}

#[test]
fn gpd_shape_is_recovered_over_replications() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for k in [-0.2, 0.0, 0.3, 0.7] {
        let fits: Vec<f64> = (0..200)
            .map(|_| fit_gpd_tail(&gpd_sample(k, 1.0, 4000, &mut rng)).unwrap().k_hat)
            .collect();
        let median = Data::new(fits).median();
        assert!((median - k).abs() <= 0.1, "k = {k}: median k̂ {median}");
    }
}

#[test]
fn ratios_spanning_beyond_float_range_are_infinite() {
    let log_ratios: Vec<f64> = (0..1000).map(|i| i as f64 * 5.0).collect();
    let report = psis_from_log_ratios(&log_ratios).unwrap();
    assert_eq!(report.k_hat, f64::INFINITY);
    assert_eq!(report.verdict, Verdict::Poor);
    assert!(psis_from_log_ratios(&[0.0, f64::NAN]).is_err());
}

#[test]
fn verdict_bands_partition_the_line() {
    for (k, v) in [
        (f64::NEG_INFINITY, Verdict::Close),
        (0.499_999, Verdict::Close),
        (0.5, Verdict::Useful),
        (0.699_999, Verdict::Useful),
        (0.7, Verdict::Poor),
        (f64::INFINITY, Verdict::Poor),
    ] {
        assert_eq!(Verdict::from_k_hat(k), v);
    }
}

#[test]
fn exact_posterior_gives_constant_ratios() {
    let model = bernoulli();
    let log_z = ln_beta(3.1, 1.1) - ln_beta(1.1, 1.1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let beta = rand_distr::Beta::new(3.1, 1.1).unwrap();
    let theta: Vec<f64> = (0..2000)
        .map(|_| {
            let pi: f64 = beta.sample(&mut rng);
            (pi / (1.0 - pi)).ln()
        })
        .collect();
    let log_q: Vec<f64> = theta.iter().map(|&u| bernoulli_posterior_logit(u)).collect();
    let bank = SampleBank {
        z: draw_base(1, theta.len(), &mut rng),
        theta,
        log_q,
    };
    for r in importance_ratios(&bank, &model) {
        assert!((r - log_z).abs() <= 1e-10);
    }
}

#[test]
fn prior_family_without_data_gives_unit_ratios() {
    let model = CauchyLocation::new(&[]).unwrap();
    let family = mean_field_gaussian_family(1).unwrap();
    let bank = sample_posterior(&family, 1000, &mut ChaCha8Rng::seed_from_u64(4));
    assert!(importance_ratios(&bank, &model).iter().all(|r| r.abs() <= 1e-12));
}

/// Student-t(3) density on the line, no data.
struct HeavyTailed;

impl ProbabilisticModel for HeavyTailed {
    fn name(&self) -> &str {
        "heavy"
    }
    fn param_names(&self) -> Vec<String> {
        vec!["x".into()]
    }
    fn constraints(&self) -> Vec<Constraint> {
        vec![Constraint::Identity]
    }
    fn n_rows(&self) -> usize {
        0
    }
    fn log_prior<S: Scalar>(&self, u: &[S]) -> S {
        (u[0].square() / 3.0 + 1.0).ln() * -2.0
    }
    fn log_likelihood_rows<S: Scalar>(&self, u: &[S], _rows: Option<&[usize]>) -> S {
        u[0].lift(0.0)
    }
}

#[test]
fn light_proposal_for_heavy_target_skews_ratios_right() {
    let family = mean_field_gaussian_family(1).unwrap();
    let bank = sample_posterior(&family, 20_000, &mut ChaCha8Rng::seed_from_u64(5));
    assert!(sample_skewness(&importance_ratios(&bank, &HeavyTailed)) > 0.0);
    let report = psis_khat(&family, &HeavyTailed, 5000, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    assert!(report.k_hat > 0.5);
}

#[test]
fn gaussian_kl_examples() {
    let family = mean_field_gaussian_family(1).unwrap();
    let std_normal = |u: &[f64]| -0.5 * u[0] * u[0] - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let shifted = |u: &[f64]| -0.5 * (u[0] - 1.0).powi(2) - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let same = kl_vs_analytic(&family, std_normal, 10_000, &mut rng);
    assert!(same.kl.abs() <= 3.0 * same.std_error + 1e-12);
    let est = kl_vs_analytic(&family, shifted, 10_000, &mut rng);
    assert!((est.kl - 0.5).abs() <= 3.0 * est.std_error, "{est:?}");
}

fn bernoulli_fit() -> VariationalFamily {
    let config = TrainConfig {
        samples: 1000,
        epochs: 1000,
        seed: 2,
        ..TrainConfig::default()
    };
    train(&bernoulli(), &FamilySpec::bernstein(10), &config).unwrap().family
}

#[test]
fn kl_estimators_agree_on_bernoulli() {
    let model = bernoulli();
    let family = bernoulli_fit();
    let log_z = log_evidence_quadrature_1d(&model, -30.0, 30.0, 2048).unwrap();
    assert!((log_z - (ln_beta(3.1, 1.1) - ln_beta(1.1, 1.1))).abs() < 1e-8);
    for seed in 0..20 {
        let a = kl_vs_analytic(&family, |u| bernoulli_posterior_logit(u[0]), 2000, &mut ChaCha8Rng::seed_from_u64(seed));
        let b = kl_via_evidence(&family, &model, log_z, 2000, &mut ChaCha8Rng::seed_from_u64(seed));
        let combined = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!((a.kl - b.kl).abs() <= 3.0 * combined);
        assert!(b.kl >= -3.0 * b.std_error);
    }
}

/// The sandwich flow has bounded support, so the few draws with |z| > 3
/// carry ratios well above the bulk and the tail fit comes out heavy even
/// though the fit is otherwise tight (KL ≈ 0.01). Run with `--ignored`.
#[test]
#[ignore = "known red: bounded flow support inflates k̂ for the Bernoulli fit"]
fn bernoulli_fit_is_close() {
    let report = psis_khat(&bernoulli_fit(), &bernoulli(), DEFAULT_DIAGNOSTIC_SAMPLES, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    assert_eq!(report.tail_count, tail_length(DEFAULT_DIAGNOSTIC_SAMPLES));
    assert_eq!(report.verdict, Verdict::Close, "k̂ {}", report.k_hat);
}

#[test]
fn cauchy_quadrature_converges() {
    let model = CauchyLocation::from_dataset(&bundled::cauchy()).unwrap();
    let coarse = log_evidence_quadrature_1d(&model, -15.0, 15.0, 2048).unwrap();
    let fine = log_evidence_quadrature_1d(&model, -15.0, 15.0, 4096).unwrap();
    assert!((coarse + 21.43069).abs() <= 1e-3, "{coarse}");
    assert!((coarse - fine).abs() <= 1e-8);
    assert!(matches!(
        log_evidence_quadrature_1d(&model, -1.0, 1.0, 512),
        Err(Error::Interval { .. })
    ));
    assert!(log_evidence_quadrature_1d(&bfvi::models::ToyLinReg::new(&[], &[]).unwrap(), 0.0, 1.0, 8).is_err());
}

#[test]
fn ks_distance_of_normal_sample() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sample: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let cdf = |x: f64| 0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2);
    assert!(ks_statistic(&sample, cdf) < 0.015);
    assert!(ks_statistic(&sample, |x| cdf(x - 0.2)) > 0.05);
}
