use bfvi::autodiff::Scalar;
use bfvi::diagnostics::ks_statistic;
use bfvi::models::*;
use bfvi::reference::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Beta, Continuous, ContinuousCDF};

/// Standard normal in one coordinate, no data.
struct StdNormal;

impl ProbabilisticModel for StdNormal {
    fn name(&self) -> &str {
        "std_normal"
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
        u[0].square() * -0.5
    }
    fn log_likelihood_rows<S: Scalar>(&self, u: &[S], _rows: Option<&[usize]>) -> S {
        u[0].lift(0.0)
    }
}

/// Uniform prior on `[0, 1]` with a flat likelihood.
struct Flat;

impl ProbabilisticModel for Flat {
    fn name(&self) -> &str {
        "flat"
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
        let x = u[0].value();
        u[0].lift(if (0.0..=1.0).contains(&x) { 0.0 } else { f64::NEG_INFINITY })
    }
    fn log_likelihood_rows<S: Scalar>(&self, u: &[S], _rows: Option<&[usize]>) -> S {
        u[0].lift(0.0)
    }
}

fn bernoulli() -> BernoulliBeta {
    BernoulliBeta::from_dataset(&bundled::bernoulli()).unwrap()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn chain_from(series: Vec<f64>) -> McmcChain {
    McmcChain {
        p: 1,
        n_kept: series.len(),
        log_joint: vec![0.0; series.len()],
        draws: series,
        acceptance_rate: 1.0,
        n_warmup: 0,
        thinning: 1,
        seed: 0,
        proposal_scale: vec![1.0],
    }
}

#[test]
fn conjugate_examples() {
    let post = analytic_beta_posterior(1.1, 1.1, &[1.0, 1.0]).unwrap();
    assert_eq!((post.alpha, post.beta), (3.1, 1.1));
    assert!((post.mean() - 0.7381).abs() < 1e-4);
    let prior = analytic_beta_posterior(2.0, 3.0, &[]).unwrap();
    assert_eq!((prior.alpha, prior.beta), (2.0, 3.0));
    let oracle = Beta::new(3.1, 1.1).unwrap();
    for x in [0.05, 0.3, 0.9] {
        assert!((post.pdf(x) - oracle.pdf(x)).abs() < 1e-12);
        assert!((post.cdf(x) - oracle.cdf(x)).abs() < 1e-12);
    }
}

#[test]
fn bernoulli_grid_matches_beta_density() {
    let model = bernoulli();
    let grid = grid_posterior_1d(&model, -30.0, 30.0, 200_001).unwrap();
    let oracle = Beta::new(3.1, 1.1).unwrap();
    let step = grid.nodes[1] - grid.nodes[0];
    let total: f64 = grid.density.windows(2).map(|w| 0.5 * step * (w[0] + w[1])).sum();
    assert!((total - 1.0).abs() <= 1e-8);
    assert!((grid.cdf.last().unwrap() - 1.0).abs() <= 1e-12);
    for (&u, &d) in grid.nodes.iter().zip(&grid.density).step_by(997) {
        let pi = 1.0 / (1.0 + (-u).exp());
        // density on the logit scale
        let expected = oracle.pdf(pi) * pi * (1.0 - pi);
        assert!((d - expected).abs() <= 1e-6, "u = {u}: {d} vs {expected}");
    }
}

#[test]
fn cauchy_grid_has_two_modes() {
    let model = CauchyLocation::from_dataset(&bundled::cauchy()).unwrap();
    let grid = grid_posterior_1d(&model, -12.0, 12.0, 24_001).unwrap();
    assert_eq!(grid.modes.len(), 2, "{:?}", grid.modes);
    assert!(grid.modes[0] > -4.0 && grid.modes[0] < -1.0);
    assert!(grid.modes[1] > 1.0 && grid.modes[1] < 4.0);
    assert!((grid.log_evidence + 21.43069).abs() <= 1e-3);
}

#[test]
fn flat_target_gives_uniform_grid() {
    let grid = grid_posterior_1d(&Flat, -0.5, 1.5, 201).unwrap();
    let inside: Vec<f64> = grid
        .nodes
        .iter()
        .zip(&grid.density)
        .filter(|(x, _)| (0.0..=1.0).contains(*x))
        .map(|(_, d)| *d)
        .collect();
    assert!(inside.iter().all(|d| *d == inside[0] && *d > 0.0));
    assert!(grid.nodes.iter().zip(&grid.density).all(|(x, d)| (0.0..=1.0).contains(x) || *d == 0.0));
    assert!(grid.modes.is_empty());
}

#[test]
fn grid_rejects_bad_inputs() {
    assert!(grid_posterior_1d(&bernoulli(), 1.0, -1.0, 100).is_err());
    let toy = ToyLinReg::from_dataset(&bundled::toy_linreg()).unwrap();
    assert!(grid_posterior_1d(&toy, -1.0, 1.0, 100).is_err());
}

#[test]
fn rwm_on_standard_normal() {
    let chain = rwm_sample(&StdNormal, &RwmConfig::new(5000, 20_000, 1)).unwrap();
    let (m, v) = mean_var(&chain.marginal(0));
    assert!(m.abs() <= 0.03, "mean {m}");
    assert!((v - 1.0).abs() <= 0.05, "var {v}");
    assert!(chain.acceptance_rate > 0.2 && chain.acceptance_rate < 0.7);
}

#[test]
fn rwm_on_bernoulli_matches_beta() {
    let model = bernoulli();
    let chain = rwm_sample(&model, &RwmConfig::new(5000, 20_000, 2)).unwrap();
    let pi: Vec<f64> = chain.marginal(0).iter().map(|&u| model.constrain(&[u])[0]).collect();
    let (m, _) = mean_var(&pi);
    assert!((m - 0.7381).abs() <= 0.01, "mean {m}");
    let oracle = Beta::new(3.1, 1.1).unwrap();
    assert!(ks_statistic(&pi, |x| oracle.cdf(x)) <= 0.02);
}

#[test]
fn rwm_is_deterministic() {
    let config = RwmConfig::new(500, 1000, 3);
    assert_eq!(rwm_sample(&bernoulli(), &config).unwrap(), rwm_sample(&bernoulli(), &config).unwrap());
}

#[test]
fn toy_regression_coefficients_are_anticorrelated() {
    let model = ToyLinReg::from_dataset(&bundled::toy_linreg()).unwrap();
    let chain = rwm_sample(&model, &RwmConfig { thinning: 5, ..RwmConfig::new(20_000, 20_000, 4) }).unwrap();
    let (b1, b2) = (chain.marginal(1), chain.marginal(2));
    let (m1, v1) = mean_var(&b1);
    let (m2, v2) = mean_var(&b2);
    let cov = b1.iter().zip(&b2).map(|(a, b)| (a - m1) * (b - m2)).sum::<f64>() / (b1.len() as f64 - 1.0);
    let corr = cov / (v1 * v2).sqrt();
    assert!(corr < -0.9, "corr {corr}");
    let sigma: Vec<f64> = chain.marginal(3).iter().map(|u| u.exp()).collect();
    let (ms, vs) = mean_var(&sigma);
    let skew = sigma.iter().map(|s| (s - ms).powi(3)).sum::<f64>() / sigma.len() as f64 / vs.powf(1.5);
    assert!(skew > 0.0);
}

#[test]
fn duplicated_chains_have_unit_rhat() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let series: Vec<f64> = (0..4000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let diag = chain_diagnostics(&[chain_from(series.clone()), chain_from(series)]).unwrap();
    assert!(diag.max_rhat() <= 1.001, "{}", diag.max_rhat());
}

#[test]
fn offset_chains_have_large_rhat() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut draw = |shift: f64| -> Vec<f64> { (0..2000).map(|_| { let x: f64 = StandardNormal.sample(&mut rng); shift + x }).collect() };
    let diag = chain_diagnostics(&[chain_from(draw(-2.0)), chain_from(draw(2.0))]).unwrap();
    assert!(diag.split_rhat[0] > 1.2);
}

#[test]
fn iid_draws_have_full_ess() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let chains: Vec<McmcChain> = (0..4)
        .map(|_| chain_from((0..5000).map(|_| StandardNormal.sample(&mut rng)).collect()))
        .collect();
    let diag = chain_diagnostics(&chains).unwrap();
    let n = 20_000.0;
    assert!((diag.ess[0] / n - 1.0).abs() <= 0.2, "ESS {}", diag.ess[0]);
}

#[test]
fn diagnostics_need_two_chains() {
    let chain = chain_from(vec![0.0; 100]);
    assert!(chain_diagnostics(std::slice::from_ref(&chain)).is_err());
}
