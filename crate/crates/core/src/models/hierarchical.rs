use super::{normal_lpdf, row_indices, Constraint, Dataset, ProbabilisticModel};
use crate::autodiff::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Parameterization {
    /// School effects `θⱼ ~ N(μ, τ)` are parameters.
    Centered,
    /// Standardized effects `θ̃ⱼ ~ N(0, 1)` with `θⱼ = μ + τ θ̃ⱼ`.
    NonCentered,
}

/// Hierarchical normal model for `J` groups with known standard errors.
///
/// `μ ~ N(0, 5)`, `τ ~ half-Cauchy(0, 5)` with `τ = exp(u)`.
/// Unconstrained order: `(μ, log τ, θ₁ … θ_J)` or `(μ, log τ, θ̃₁ … θ̃_J)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EightSchools {
    pub parameterization: Parameterization,
    y: Vec<f64>,
    sigma: Vec<f64>,
}

impl EightSchools {
    pub fn new(y: &[f64], sigma: &[f64], parameterization: Parameterization) -> Result<Self> {
        if y.len() != sigma.len() {
            return Err(Error::Data(format!("{} outcomes but {} standard errors", y.len(), sigma.len())));
        }
        if let Some(s) = sigma.iter().find(|&&s| !(s > 0.0)) {
            return Err(Error::Data(format!("standard error {s} is not positive")));
        }
        Ok(EightSchools {
            parameterization,
            y: y.to_vec(),
            sigma: sigma.to_vec(),
        })
    }

    pub fn from_dataset(data: &Dataset, parameterization: Parameterization) -> Result<Self> {
        Self::new(data.column("y")?, data.column("sigma")?, parameterization)
    }

    pub fn groups(&self) -> usize {
        self.y.len()
    }

    /// School effects `θⱼ` from an unconstrained vector of either kind.
    pub fn effects(&self, u: &[f64]) -> Vec<f64> {
        match self.parameterization {
            Parameterization::Centered => u[2..].to_vec(),
            Parameterization::NonCentered => {
                let tau = u[1].exp();
                u[2..].iter().map(|t| u[0] + tau * t).collect()
            }
        }
    }
}

/// Log density of half-Cauchy(0, γ) at `x > 0`.
pub(crate) fn half_cauchy_lpdf<S: Scalar>(x: S, gamma: f64) -> S {
    (x / gamma).square().ln_1p() * -1.0 + (2.0 / (std::f64::consts::PI * gamma)).ln()
}

trait Ln1p {
    fn ln_1p(self) -> Self;
}

impl<S: Scalar> Ln1p for S {
    fn ln_1p(self) -> S {
        (self + 1.0).ln()
    }
}

impl ProbabilisticModel for EightSchools {
    fn name(&self) -> &str {
        match self.parameterization {
            Parameterization::Centered => "eight_schools_cp",
            Parameterization::NonCentered => "eight_schools_ncp",
        }
    }

    fn param_names(&self) -> Vec<String> {
        let effect = match self.parameterization {
            Parameterization::Centered => "theta",
            Parameterization::NonCentered => "theta_tilde",
        };
        let mut names = vec!["mu".to_string(), "tau".to_string()];
        names.extend((1..=self.groups()).map(|j| format!("{effect}[{j}]")));
        names
    }

    fn constraints(&self) -> Vec<Constraint> {
        let mut c = vec![Constraint::Identity, Constraint::Exp];
        c.extend(std::iter::repeat_n(Constraint::Identity, self.groups()));
        c
    }

    fn n_rows(&self) -> usize {
        self.y.len()
    }

    fn log_prior<S: Scalar>(&self, u: &[S]) -> S {
        let (mu, log_tau) = (u[0], u[1]);
        let tau = log_tau.exp();
        let zero = mu.lift(0.0);
        let mut terms = vec![normal_lpdf(mu, zero, 5.0), half_cauchy_lpdf(tau, 5.0), log_tau];
        match self.parameterization {
            Parameterization::Centered => {
                let inv_tau = (-log_tau).exp();
                for &theta in &u[2..] {
                    // N(θ; μ, τ) with traced τ
                    terms.push(((theta - mu) * inv_tau).square() * -0.5 - log_tau - super::LN_SQRT_2PI);
                }
            }
            Parameterization::NonCentered => {
                terms.extend(u[2..].iter().map(|&t| normal_lpdf(t, zero, 1.0)));
            }
        }
        S::sum(&terms)
    }

    fn log_likelihood_rows<S: Scalar>(&self, u: &[S], rows: Option<&[usize]>) -> S {
        let tau = u[1].exp();
        let terms: Vec<S> = row_indices(rows, self.y.len())
            .map(|j| {
                let theta = match self.parameterization {
                    Parameterization::Centered => u[2 + j],
                    Parameterization::NonCentered => u[0] + tau * u[2 + j],
                };
                normal_lpdf(theta, theta.lift(self.y[j]), self.sigma[j])
            })
            .collect();
        if terms.is_empty() {
            u[0].lift(0.0)
        } else {
            S::sum(&terms)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_cauchy_at_scale() {
        let expected = (1.0 / (5.0 * std::f64::consts::PI)).ln();
        assert!((half_cauchy_lpdf(5.0, 5.0) - expected).abs() < 1e-14);
    }

    #[test]
    fn general_group_count_and_mismatch() {
        let m = EightSchools::new(&[1.0, 2.0, 3.0], &[1.0, 1.0, 2.0], Parameterization::Centered).unwrap();
        assert_eq!(m.dim(), 5);
        assert!(EightSchools::new(&[1.0], &[1.0, 2.0], Parameterization::NonCentered).is_err());
    }
}
