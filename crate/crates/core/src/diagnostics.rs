//! Posterior-quality measurements.
//!
//! * Importance ratios `log r_s = log p(D|θ_s) + log p(θ_s) − log q(θ_s)` and
//!   the Pareto-smoothed importance sampling shape `k̂` of their right tail.
//! * Sample-based KL divergences against a normalized posterior density or
//!   via a known log-evidence.
//! * Gauss–Legendre quadrature of one-dimensional evidences in log space.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ProbabilisticModel;
use crate::vi::{sample_posterior, SampleBank, VariationalFamily};

/// Default number of draws for [`psis_khat`].
pub const DEFAULT_DIAGNOSTIC_SAMPLES: usize = 5000;

/// Fits with `k̂` above this are reported as `+∞`.
pub const K_HAT_DIVERGED: f64 = 10.0;

/// `log r_s` for every draw of `bank`.
pub fn importance_ratios<M: ProbabilisticModel>(bank: &SampleBank, model: &M) -> Vec<f64> {
    (0..bank.len())
        .map(|s| {
            let theta = bank.theta(s);
            model.log_likelihood(theta) + model.log_prior(theta) - bank.log_q[s]
        })
        .collect()
}

/// Generalized-Pareto fit to the upper tail of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdTail {
    pub k_hat: f64,
    pub sigma_hat: f64,
    pub tail_count: usize,
}

/// `min(⌈0.2 S⌉, ⌈3 √S⌉)`.
pub fn tail_length(samples: usize) -> usize {
    let s = samples as f64;
    ((0.2 * s).ceil()).min((3.0 * s.sqrt()).ceil()) as usize
}

/// Zhang–Stephens estimate of `(k, σ)` from positive exceedances, sorted
/// ascending, with the weakly informative prior pulling `k` toward 0.5.
fn zhang_stephens(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let nf = n as f64;
    const PRIOR: f64 = 3.0;
    let m = 30 + (nf.sqrt().floor() as usize);
    let x_star = x[((nf / 4.0 + 0.5).floor() as usize).max(1) - 1];
    let x_max = x[n - 1];
    let thetas: Vec<f64> = (1..=m)
        .map(|j| 1.0 / x_max + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / PRIOR / x_star)
        .collect();
    let profile: Vec<f64> = thetas
        .iter()
        .map(|&theta| {
            let k = x.iter().map(|&xi| (-theta * xi).ln_1p()).sum::<f64>() / nf;
            nf * ((-theta / k).ln() - k - 1.0)
        })
        .collect();
    let max = profile.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = profile
        .iter()
        .map(|&l| if l.is_finite() { (l - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = weights.iter().sum();
    let theta_hat = thetas.iter().zip(&weights).map(|(t, w)| t * w).sum::<f64>() / total;
    let k = x.iter().map(|&xi| (-theta_hat * xi).ln_1p()).sum::<f64>() / nf;
    let sigma = -k / theta_hat;
    // shrink toward 0.5 as if 10 extra observations supported it
    let a = 10.0;
    let k = k * nf / (nf + a) + a * 0.5 / (nf + a);
    (k, sigma)
}

/// Fits a GPD directly to positive exceedances (any order).
pub fn fit_gpd_exceedances(exceedances: &[f64]) -> Result<GpdTail> {
    if exceedances.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::DegenerateTail("exceedances must be finite and non-negative".into()));
    }
    let mut x = exceedances.to_vec();
    x.sort_by(f64::total_cmp);
    let mut distinct = x.clone();
    distinct.dedup();
    if distinct.len() < 5 || x[x.len() - 1] <= 0.0 {
        return Err(Error::DegenerateTail(format!("only {} distinct tail values", distinct.len())));
    }
    let (k, sigma) = zhang_stephens(&x);
    Ok(GpdTail {
        k_hat: if k.is_finite() && k <= K_HAT_DIVERGED { k } else { f64::INFINITY },
        sigma_hat: sigma,
        tail_count: x.len(),
    })
}

/// Fits a GPD to the exceedances of the largest `tail_length(S)` values over
/// the next-largest one.
///
/// `ratios` are on the natural (not log) scale; any common scale factor is
/// irrelevant. A diverging fit yields `k̂ = +∞`.
pub fn fit_gpd_tail(ratios: &[f64]) -> Result<GpdTail> {
    let s = ratios.len();
    if s < 100 {
        return Err(Error::DegenerateTail(format!("need at least 100 ratios, got {s}")));
    }
    if ratios.iter().any(|r| !r.is_finite()) {
        return Err(Error::DegenerateTail("non-finite ratio".into()));
    }
    let mut sorted = ratios.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail_count = tail_length(s);
    let cutoff = sorted[s - tail_count - 1];
    let exceed: Vec<f64> = sorted[s - tail_count..].iter().map(|r| r - cutoff).collect();
    fit_gpd_exceedances(&exceed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// `k̂ < 0.5`
    Close,
    /// `0.5 ≤ k̂ < 0.7`
    Useful,
    /// `k̂ ≥ 0.7`, including `+∞`
    Poor,
}

impl Verdict {
    pub fn from_k_hat(k: f64) -> Self {
        if k < 0.5 {
            Verdict::Close
        } else if k < 0.7 {
            Verdict::Useful
        } else {
            Verdict::Poor
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsisReport {
    /// `+∞` when the tail fit diverged (serialized as `null`).
    #[serde(with = "infinite_as_null")]
    pub k_hat: f64,
    pub tail_count: usize,
    pub samples: usize,
    pub verdict: Verdict,
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// `k̂` from log importance ratios.
pub fn psis_from_log_ratios(log_ratios: &[f64]) -> Result<PsisReport> {
    let finite: Vec<f64> = log_ratios.iter().copied().filter(|r| r.is_finite()).collect();
    if finite.len() < log_ratios.len() {
        return Err(Error::DegenerateTail("non-finite log ratio".into()));
    }
    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ratios: Vec<f64> = finite.iter().map(|r| (r - max).exp()).collect();
    let (k_hat, tail_count) = match fit_gpd_tail(&ratios) {
        Ok(tail) => (tail.k_hat, tail.tail_count),
        // The tail is distinct on the log scale but collapses once
        // exponentiated: the ratios span more than the floating-point range,
        // which no finite shape can describe.
        Err(Error::DegenerateTail(_)) if finite.len() >= 100 && log_tail_is_distinct(&finite) => (f64::INFINITY, tail_length(finite.len())),
        Err(e) => return Err(e),
    };
    Ok(PsisReport {
        k_hat,
        tail_count,
        samples: log_ratios.len(),
        verdict: Verdict::from_k_hat(k_hat),
    })
}

fn log_tail_is_distinct(log_ratios: &[f64]) -> bool {
    let mut sorted = log_ratios.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tail = sorted[sorted.len() - tail_length(sorted.len()) - 1..].to_vec();
    tail.dedup();
    tail.len() >= 6
}

/// Draws `samples` points from `family` and reports the tail shape of the
/// importance ratios against `model`.
pub fn psis_khat<M: ProbabilisticModel, R: Rng + ?Sized>(
    family: &VariationalFamily,
    model: &M,
    samples: usize,
    rng: &mut R,
) -> Result<PsisReport> {
    let bank = sample_posterior(family, samples, rng);
    psis_from_log_ratios(&importance_ratios(&bank, model))
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    pub kl: f64,
    pub std_error: f64,
}

fn mean_and_se(values: &[f64]) -> KlEstimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    KlEstimate {
        kl: mean,
        std_error: (var / n).sqrt(),
    }
}

/// `(1/S) Σ [log q(θ_s) − log p(θ_s | D)]` for a normalized posterior.
pub fn kl_vs_analytic<R: Rng + ?Sized>(
    family: &VariationalFamily,
    analytic_log_pdf: impl Fn(&[f64]) -> f64,
    samples: usize,
    rng: &mut R,
) -> KlEstimate {
    let bank = sample_posterior(family, samples, rng);
    let terms: Vec<f64> = (0..bank.len())
        .map(|s| bank.log_q[s] - analytic_log_pdf(bank.theta(s)))
        .collect();
    mean_and_se(&terms)
}

/// `(1/S) Σ [log q(θ_s) − log p(D|θ_s) − log p(θ_s)] + log Z`.
pub fn kl_via_evidence<M: ProbabilisticModel, R: Rng + ?Sized>(
    family: &VariationalFamily,
    model: &M,
    log_evidence: f64,
    samples: usize,
    rng: &mut R,
) -> KlEstimate {
    let bank = sample_posterior(family, samples, rng);
    let mut terms = importance_ratios(&bank, model);
    terms.iter_mut().for_each(|t| *t = log_evidence - *t);
    mean_and_se(&terms)
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi's initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Mass fraction allowed beyond the integration interval.
const TAIL_MASS: f64 = 1e-10;

/// Fails when the density at either end of `[lo, hi]` is not negligible
/// relative to the evidence.
pub(crate) fn check_endpoints<M: ProbabilisticModel>(model: &M, lo: f64, hi: f64, log_z: f64) -> Result<()> {
    let width = (hi - lo).ln();
    for end in [lo, hi] {
        let lj = model.log_joint(&[end]);
        if lj.is_nan() || lj - log_z + width > TAIL_MASS.ln() {
            return Err(Error::Interval { lo, hi });
        }
    }
    Ok(())
}

/// `log ∫_lo^hi exp(log p(D|θ) + log p(θ)) dθ` for a one-parameter model.
pub fn log_evidence_quadrature_1d<M: ProbabilisticModel>(model: &M, lo: f64, hi: f64, nodes: usize) -> Result<f64> {
    if model.dim() != 1 {
        return Err(Error::Config(format!("quadrature needs p = 1, model has p = {}", model.dim())));
    }
    if !(lo < hi) || nodes == 0 {
        return Err(Error::Interval { lo, hi });
    }
    let (x, w) = gauss_legendre(nodes);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let terms: Vec<f64> = x
        .iter()
        .zip(&w)
        .map(|(&t, &wt)| wt.ln() + model.log_joint(&[mid + half * t]))
        .collect();
    let log_z = log_sum_exp(terms.iter().copied()) + half.ln();
    check_endpoints(model, lo, hi, log_z)?;
    Ok(log_z)
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Strict local maxima of a Gaussian kernel density estimate evaluated on
/// `grid_points` equally spaced points spanning `[lo, hi]`.
pub fn kde_modes(sample: &[f64], bandwidth: f64, lo: f64, hi: f64, grid_points: usize) -> Vec<f64> {
    let step = (hi - lo) / (grid_points - 1) as f64;
    let grid: Vec<f64> = (0..grid_points).map(|i| lo + i as f64 * step).collect();
    let dens: Vec<f64> = grid
        .iter()
        .map(|&g| {
            sample
                .iter()
                .map(|&x| (-0.5 * ((g - x) / bandwidth).powi(2)).exp())
                .sum::<f64>()
        })
        .collect();
    strict_local_maxima(&grid, &dens)
}

pub(crate) fn strict_local_maxima(grid: &[f64], values: &[f64]) -> Vec<f64> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] > values[i - 1] && values[i] > values[i + 1])
        .map(|i| grid[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_bands_are_left_closed() {
        assert_eq!(Verdict::from_k_hat(0.4999), Verdict::Close);
        assert_eq!(Verdict::from_k_hat(0.5), Verdict::Useful);
        assert_eq!(Verdict::from_k_hat(0.6999), Verdict::Useful);
        assert_eq!(Verdict::from_k_hat(0.7), Verdict::Poor);
        assert_eq!(Verdict::from_k_hat(f64::INFINITY), Verdict::Poor);
        assert_eq!(Verdict::from_k_hat(-3.0), Verdict::Close);
    }

    #[test]
    fn tail_length_rule() {
        assert_eq!(tail_length(100), 20);
        assert_eq!(tail_length(4000), 190);
        assert_eq!(tail_length(5000), 213);
    }

    #[test]
    fn constant_ratios_are_degenerate() {
        assert!(matches!(fit_gpd_tail(&[1.0; 500]), Err(Error::DegenerateTail(_))));
        assert!(fit_gpd_tail(&[1.0; 50]).is_err());
    }

    #[test]
    fn legendre_rules_integrate_polynomials() {
        let (x, w) = gauss_legendre(5);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // exact up to degree 9
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((int - 2.0 / 9.0).abs() < 1e-14);
        let (x, w) = gauss_legendre(2048);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn psis_report_serializes_infinity_as_null() {
        let r = PsisReport {
            k_hat: f64::INFINITY,
            tail_count: 10,
            samples: 100,
            verdict: Verdict::Poor,
        };
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"k_hat\":null"));
        let back: PsisReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
