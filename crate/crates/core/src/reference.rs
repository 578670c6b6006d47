//! Ground-truth posteriors: conjugate Beta, dense grids for one parameter,
//! and adaptive random-walk Metropolis with split-R̂ / ESS diagnostics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta as BetaDist, Continuous, ContinuousCDF};

use crate::diagnostics::{check_endpoints, strict_local_maxima};
use crate::error::{Error, Result};
use crate::models::ProbabilisticModel;

/// `Beta(α, β)` posterior of a Bernoulli success probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPosterior {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaPosterior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::Domain(format!("Beta shapes ({alpha}, {beta}) must be positive")));
        }
        Ok(BetaPosterior { alpha, beta })
    }

    fn dist(&self) -> BetaDist {
        BetaDist::new(self.alpha, self.beta).expect("validated shapes")
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.dist().pdf(x)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        self.dist().ln_pdf(x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.dist().cdf(x)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let d = rand_distr::Beta::new(self.alpha, self.beta).expect("validated shapes");
        (0..n).map(|_| rng.sample(d)).collect()
    }
}

/// Conjugate update `Beta(α₀ + Σy, β₀ + n − Σy)`.
pub fn analytic_beta_posterior(alpha0: f64, beta0: f64, y: &[f64]) -> Result<BetaPosterior> {
    if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::Data(format!("Bernoulli outcome {bad} is not 0 or 1")));
    }
    let s: f64 = y.iter().sum();
    BetaPosterior::new(alpha0 + s, beta0 + y.len() as f64 - s)
}

/// Posterior density of a one-parameter model tabulated on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPosterior {
    pub nodes: Vec<f64>,
    pub density: Vec<f64>,
    pub cdf: Vec<f64>,
    pub modes: Vec<f64>,
    pub log_evidence: f64,
}

impl GridPosterior {
    /// Linear interpolation of the tabulated CDF.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let (lo, hi) = (self.nodes[0], self.nodes[self.nodes.len() - 1]);
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let step = (hi - lo) / (self.nodes.len() - 1) as f64;
        let i = (((x - lo) / step) as usize).min(self.nodes.len() - 2);
        let t = (x - self.nodes[i]) / step;
        self.cdf[i] * (1.0 - t) + self.cdf[i + 1] * t
    }

    /// Mass on `θ > 0`.
    pub fn positive_mass(&self) -> f64 {
        1.0 - self.cdf_at(0.0)
    }
}

/// Normalizes `exp(log_joint)` on `nodes` uniform points over `[lo, hi]` with
/// the trapezoid rule.
pub fn grid_posterior_1d<M: ProbabilisticModel>(model: &M, lo: f64, hi: f64, nodes: usize) -> Result<GridPosterior> {
    if model.dim() != 1 {
        return Err(Error::Config(format!("grid posterior needs p = 1, model has p = {}", model.dim())));
    }
    if !(lo < hi) || nodes < 3 {
        return Err(Error::Interval { lo, hi });
    }
    let step = (hi - lo) / (nodes - 1) as f64;
    let grid: Vec<f64> = (0..nodes).map(|i| lo + i as f64 * step).collect();
    let log_joint: Vec<f64> = grid.iter().map(|&x| model.log_joint(&[x])).collect();
    let max = log_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Interval { lo, hi });
    }
    let unnorm: Vec<f64> = log_joint.iter().map(|l| (l - max).exp()).collect();
    let mut cdf = vec![0.0; nodes];
    for i in 1..nodes {
        cdf[i] = cdf[i - 1] + 0.5 * step * (unnorm[i - 1] + unnorm[i]);
    }
    let total = cdf[nodes - 1];
    let log_evidence = max + total.ln();
    check_endpoints(model, lo, hi, log_evidence)?;
    let density: Vec<f64> = unnorm.iter().map(|u| u / total).collect();
    cdf.iter_mut().for_each(|c| *c /= total);
    let modes = strict_local_maxima(&grid, &density);
    Ok(GridPosterior {
        nodes: grid,
        density,
        cdf,
        modes,
        log_evidence,
    })
}

/// Kept draws of one random-walk Metropolis chain, unconstrained space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcChain {
    pub p: usize,
    /// Row-major `n_kept × p`.
    pub draws: Vec<f64>,
    pub log_joint: Vec<f64>,
    pub acceptance_rate: f64,
    pub n_warmup: usize,
    pub n_kept: usize,
    pub thinning: usize,
    pub seed: u64,
    /// Final per-coordinate proposal scales.
    pub proposal_scale: Vec<f64>,
}

impl McmcChain {
    pub fn draw(&self, i: usize) -> &[f64] {
        &self.draws[i * self.p..(i + 1) * self.p]
    }

    pub fn marginal(&self, j: usize) -> Vec<f64> {
        (0..self.n_kept).map(|i| self.draw(i)[j]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwmConfig {
    pub n_warmup: usize,
    pub n_kept: usize,
    pub thinning: usize,
    pub seed: u64,
}

impl RwmConfig {
    pub fn new(n_warmup: usize, n_kept: usize, seed: u64) -> Self {
        RwmConfig {
            n_warmup,
            n_kept,
            thinning: 1,
            seed,
        }
    }
}

const INIT_ATTEMPTS: usize = 10;

/// Adaptive random-walk Metropolis.
///
/// Proposals are `u + exp(ℓ) · d ⊙ ξ`, `ξ ~ N(0, I)`. During warmup the
/// per-coordinate scales `d` track the running standard deviation of the
/// chain and the global log step `ℓ` follows a Robbins–Monro recursion on
/// the acceptance indicator toward 0.44 (`p = 1`) or 0.234 (`p > 1`).
/// Adaptation stops at the end of warmup.
pub fn rwm_sample<M: ProbabilisticModel>(model: &M, config: &RwmConfig) -> Result<McmcChain> {
    let p = model.dim();
    if p == 0 || p > 64 {
        return Err(Error::Config(format!("random-walk sampler supports 1 ≤ p ≤ 64, got {p}")));
    }
    if config.thinning == 0 || config.n_kept == 0 {
        return Err(Error::Config("kept draws and thinning must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let log_target = |u: &[f64]| model.log_joint(u);

    // Start at the origin; fall back to uniform(−2, 2) draws.
    let mut u = vec![0.0; p];
    let mut lp = log_target(&u);
    let mut attempt = 0;
    while !lp.is_finite() {
        if attempt == INIT_ATTEMPTS {
            return Err(Error::Init { attempts: INIT_ATTEMPTS });
        }
        u = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        lp = log_target(&u);
        attempt += 1;
    }

    let target = if p == 1 { 0.44 } else { 0.234 };
    let mut log_step = (2.38 / (p as f64).sqrt()).ln();
    let mut scale = vec![1.0; p];
    // Welford accumulators over warmup draws
    let mut mean = u.clone();
    let mut m2 = vec![0.0; p];
    let mut proposal = vec![0.0; p];

    let total = config.n_warmup + config.n_kept * config.thinning;
    let mut draws = Vec::with_capacity(config.n_kept * p);
    let mut log_joint = Vec::with_capacity(config.n_kept);
    let mut accepted = 0usize;
    for t in 0..total {
        let step = log_step.exp();
        for j in 0..p {
            let xi: f64 = rng.sample(StandardNormal);
            proposal[j] = u[j] + step * scale[j] * xi;
        }
        let lp_new = log_target(&proposal);
        let log_u: f64 = rng.random::<f64>().ln();
        let accept = lp_new.is_finite() && log_u < lp_new - lp;
        if accept {
            u.copy_from_slice(&proposal);
            lp = lp_new;
        }
        if t < config.n_warmup {
            let gain = ((t + 1) as f64).powf(-0.6);
            log_step += gain * (if accept { 1.0 } else { 0.0 } - target);
            let n = (t + 2) as f64;
            for j in 0..p {
                let delta = u[j] - mean[j];
                mean[j] += delta / n;
                m2[j] += delta * (u[j] - mean[j]);
            }
            // Refresh the diagonal shape periodically once estimates settle.
            if t >= 200 && (t + 1) % 100 == 0 {
                for j in 0..p {
                    let sd = (m2[j] / (n - 1.0)).sqrt();
                    if sd.is_finite() && sd > 0.0 {
                        scale[j] = sd;
                    }
                }
            }
        } else {
            accepted += accept as usize;
            let k = t - config.n_warmup;
            if (k + 1) % config.thinning == 0 {
                draws.extend_from_slice(&u);
                log_joint.push(lp);
            }
        }
    }
    Ok(McmcChain {
        p,
        draws,
        log_joint,
        acceptance_rate: accepted as f64 / (config.n_kept * config.thinning) as f64,
        n_warmup: config.n_warmup,
        n_kept: config.n_kept,
        thinning: config.thinning,
        seed: config.seed,
        proposal_scale: scale.iter().map(|s| s * log_step.exp()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub split_rhat: Vec<f64>,
    pub ess: Vec<f64>,
}

impl ChainDiagnostics {
    pub fn max_rhat(&self) -> f64 {
        self.split_rhat.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Split-R̂ and effective sample size for each dimension.
pub fn chain_diagnostics(chains: &[McmcChain]) -> Result<ChainDiagnostics> {
    if chains.len() < 2 {
        return Err(Error::Config("at least two chains are required".into()));
    }
    let n = chains[0].n_kept;
    let p = chains[0].p;
    if chains.iter().any(|c| c.n_kept != n || c.p != p) {
        return Err(Error::Config("chains must have equal length and dimension".into()));
    }
    if n < 4 {
        return Err(Error::Config("chains need at least four draws".into()));
    }
    let (mut split_rhat, mut ess) = (Vec::with_capacity(p), Vec::with_capacity(p));
    for j in 0..p {
        let series: Vec<Vec<f64>> = chains.iter().map(|c| c.marginal(j)).collect();
        let (r, e) = scalar_diagnostics(&series);
        split_rhat.push(r);
        ess.push(e);
    }
    Ok(ChainDiagnostics { split_rhat, ess })
}

/// Split-R̂ and ESS of a scalar quantity tracked by several chains.
pub fn scalar_diagnostics(chains: &[Vec<f64>]) -> (f64, f64) {
    let half = chains[0].len() / 2;
    let splits: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[c.len() - half..]])
        .collect();
    let m = splits.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = splits.iter().map(|s| s.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let vars: Vec<f64> = splits
        .iter()
        .zip(&means)
        .map(|(s, mu)| s.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .collect();
    let w = vars.iter().sum::<f64>() / m;
    let b = n * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1.0);
    let var_plus = (n - 1.0) / n * w + b / n;
    if !(w > 0.0) {
        return (if b > 0.0 { f64::INFINITY } else { 1.0 }, m * n);
    }
    let rhat = (var_plus / w).sqrt();

    // Geyer's initial monotone sequence on the combined autocorrelation.
    let autocov = |lag: usize| -> f64 {
        splits
            .iter()
            .zip(&means)
            .map(|(s, mu)| (0..half - lag).map(|i| (s[i] - mu) * (s[i + lag] - mu)).sum::<f64>() / n)
            .sum::<f64>()
            / m
    };
    let rho = |lag: usize| 1.0 - (w - autocov(lag)) / var_plus;
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < half {
        let pair = rho(lag) + rho(lag + 1);
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    let ess = m * n / tau.max(1.0 / (m * n).log10());
    (rhat, ess)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_updates() {
        let post = analytic_beta_posterior(1.1, 1.1, &[1.0, 1.0]).unwrap();
        assert_eq!((post.alpha, post.beta), (3.1, 1.1));
        assert!((post.mean() - 3.1 / 4.2).abs() < 1e-15);
        assert_eq!(analytic_beta_posterior(2.0, 3.0, &[]).unwrap(), BetaPosterior { alpha: 2.0, beta: 3.0 });
        assert!(analytic_beta_posterior(1.0, 1.0, &[2.0]).is_err());
    }

    #[test]
    fn one_chain_is_not_enough() {
        let chain = McmcChain {
            p: 1,
            draws: vec![0.0; 10],
            log_joint: vec![0.0; 10],
            acceptance_rate: 0.5,
            n_warmup: 0,
            n_kept: 10,
            thinning: 1,
            seed: 0,
            proposal_scale: vec![1.0],
        };
        assert!(chain_diagnostics(std::slice::from_ref(&chain)).is_err());
    }
}
