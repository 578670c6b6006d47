use statrs::function::beta::ln_beta;

use super::{normal_lpdf, row_indices, Constraint, Dataset, ProbabilisticModel};
use crate::autodiff::Scalar;
use crate::error::{Error, Result};

/// `y ~ Bernoulli(π)`, `π ~ Beta(α₀, β₀)`, `π = σ(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliBeta {
    pub alpha0: f64,
    pub beta0: f64,
    y: Vec<f64>,
}

impl BernoulliBeta {
    pub const PRIOR: (f64, f64) = (1.1, 1.1);

    pub fn new(y: &[f64]) -> Result<Self> {
        if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Data(format!("Bernoulli outcome {bad} is not 0 or 1")));
        }
        Ok(BernoulliBeta {
            alpha0: Self::PRIOR.0,
            beta0: Self::PRIOR.1,
            y: y.to_vec(),
        })
    }

    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        Self::new(data.column("y")?)
    }

    /// Shape parameters of the conjugate posterior.
    pub fn posterior_shape(&self) -> (f64, f64) {
        let s: f64 = self.y.iter().sum();
        (self.alpha0 + s, self.beta0 + self.y.len() as f64 - s)
    }
}

impl ProbabilisticModel for BernoulliBeta {
    fn name(&self) -> &str {
        "bernoulli"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["pi".into()]
    }

    fn constraints(&self) -> Vec<Constraint> {
        vec![Constraint::Sigmoid]
    }

    fn n_rows(&self) -> usize {
        self.y.len()
    }

    fn log_prior<S: Scalar>(&self, u: &[S]) -> S {
        // ln π and ln(1 − π) also make up the sigmoid log-Jacobian.
        let ln_pi = u[0].log_sigmoid();
        let ln_1m = (-u[0]).log_sigmoid();
        ln_pi * self.alpha0 + ln_1m * self.beta0 - ln_beta(self.alpha0, self.beta0)
    }

    fn log_likelihood_rows<S: Scalar>(&self, u: &[S], rows: Option<&[usize]>) -> S {
        let (mut ones, mut zeros) = (0.0, 0.0);
        for i in row_indices(rows, self.y.len()) {
            if self.y[i] == 1.0 {
                ones += 1.0;
            } else {
                zeros += 1.0;
            }
        }
        u[0].log_sigmoid() * ones + (-u[0]).log_sigmoid() * zeros
    }

    fn analytic_log_posterior(&self, u: &[f64]) -> Option<f64> {
        let (a, b) = self.posterior_shape();
        let ln_pi = u[0].log_sigmoid();
        let ln_1m = (-u[0]).log_sigmoid();
        Some(ln_pi * a + ln_1m * b - ln_beta(a, b))
    }

    fn analytic_log_evidence(&self) -> Option<f64> {
        let (a, b) = self.posterior_shape();
        Some(ln_beta(a, b) - ln_beta(self.alpha0, self.beta0))
    }
}

/// `y ~ Cauchy(ξ, γ)` with known `γ`, `ξ ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyLocation {
    pub gamma: f64,
    y: Vec<f64>,
}

impl CauchyLocation {
    pub const GAMMA: f64 = 0.5;

    pub fn new(y: &[f64]) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite Cauchy observation".into()));
        }
        Ok(CauchyLocation {
            gamma: Self::GAMMA,
            y: y.to_vec(),
        })
    }

    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        Self::new(data.column("y")?)
    }
}

impl ProbabilisticModel for CauchyLocation {
    fn name(&self) -> &str {
        "cauchy"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["xi".into()]
    }

    fn constraints(&self) -> Vec<Constraint> {
        vec![Constraint::Identity]
    }

    fn n_rows(&self) -> usize {
        self.y.len()
    }

    fn log_prior<S: Scalar>(&self, u: &[S]) -> S {
        normal_lpdf(u[0], u[0].lift(0.0), 1.0)
    }

    fn log_likelihood_rows<S: Scalar>(&self, u: &[S], rows: Option<&[usize]>) -> S {
        let xi = u[0];
        let norm = (std::f64::consts::PI * self.gamma).ln();
        let (mut value, mut slope) = (0.0, 0.0);
        for i in row_indices(rows, self.y.len()) {
            let r = (xi.value() - self.y[i]) / self.gamma;
            value -= r.mul_add(r, 1.0).ln() + norm;
            slope -= 2.0 * r / (self.gamma * r.mul_add(r, 1.0));
        }
        S::compose(value, &[xi], &[slope])
    }

    /// Gauss–Legendre quadrature over `[−12, 12]`, where the standard-normal
    /// prior leaves less than `e⁻⁷⁰` of the mass outside.
    fn analytic_log_evidence(&self) -> Option<f64> {
        crate::diagnostics::log_evidence_quadrature_1d(self, -12.0, 12.0, 2048).ok()
    }
}
