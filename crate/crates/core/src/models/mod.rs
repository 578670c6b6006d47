//! Probabilistic models evaluated in unconstrained parameter space.
//!
//! Every model maps an unconstrained vector `u ∈ ℝᵖ` to its natural
//! parameters through per-coordinate [`Constraint`]s. The log-Jacobian of
//! that map is part of [`ProbabilisticModel::log_prior`], so
//! `log_prior + log_likelihood` is the log posterior density of `u` up to
//! the evidence.

mod bnn;
mod data;
mod hierarchical;
mod regression;
mod simple;

pub use bnn::BnnRegression;
pub use data::{bundled, Dataset, EightSchoolsData};
pub use hierarchical::{EightSchools, Parameterization};
pub use regression::{Diamonds, ToyLinReg};
pub use simple::{BernoulliBeta, CauchyLocation};

use crate::autodiff::Scalar;
use crate::error::Result;

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Bijection from the real line onto a parameter's support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Identity,
    /// `π = σ(u) ∈ (0, 1)`.
    Sigmoid,
    /// `σ = exp(u) ∈ (0, ∞)`.
    Exp,
}

impl Constraint {
    pub fn constrain(self, u: f64) -> f64 {
        match self {
            Constraint::Identity => u,
            Constraint::Sigmoid => crate::autodiff::sigmoid(u),
            Constraint::Exp => u.exp(),
        }
    }

    pub fn unconstrain(self, x: f64) -> Result<f64> {
        let bad = || crate::Error::Domain(format!("{x} is outside the support of a {self:?} constraint"));
        match self {
            Constraint::Identity => Ok(x),
            Constraint::Sigmoid if x > 0.0 && x < 1.0 => Ok((x / (1.0 - x)).ln()),
            Constraint::Exp if x > 0.0 => Ok(x.ln()),
            _ => Err(bad()),
        }
    }

    /// `log |dx/du|`.
    pub fn log_jacobian(self, u: f64) -> f64 {
        self.apply(u).1
    }

    /// Constrained value and log-Jacobian as scalars of any kind.
    pub fn apply<S: Scalar>(self, u: S) -> (S, S) {
        match self {
            Constraint::Identity => (u, u.lift(0.0)),
            Constraint::Sigmoid => (u.sigmoid(), u.log_sigmoid() + (-u).log_sigmoid()),
            Constraint::Exp => (u.exp(), u),
        }
    }
}

/// A Bayesian model over an unconstrained vector of dimension `p`.
///
/// Data is owned by the model; likelihoods are sums over rows so that a
/// subset of rows can be evaluated for mini-batching.
pub trait ProbabilisticModel: Sync {
    fn name(&self) -> &str;

    fn param_names(&self) -> Vec<String>;

    fn constraints(&self) -> Vec<Constraint>;

    fn dim(&self) -> usize {
        self.param_names().len()
    }

    /// Number of likelihood terms.
    fn n_rows(&self) -> usize;

    /// Log prior density of `u`, including constraint log-Jacobians.
    fn log_prior<S: Scalar>(&self, u: &[S]) -> S;

    /// Log-likelihood summed over `rows` (all rows when `None`).
    fn log_likelihood_rows<S: Scalar>(&self, u: &[S], rows: Option<&[usize]>) -> S;

    fn log_likelihood<S: Scalar>(&self, u: &[S]) -> S {
        self.log_likelihood_rows(u, None)
    }

    fn log_joint<S: Scalar>(&self, u: &[S]) -> S {
        self.log_prior(u) + self.log_likelihood(u)
    }

    /// Normalized log posterior density of `u`, when known in closed form.
    fn analytic_log_posterior(&self, _u: &[f64]) -> Option<f64> {
        None
    }

    fn analytic_log_evidence(&self) -> Option<f64> {
        None
    }

    /// Natural-scale parameters.
    fn constrain(&self, u: &[f64]) -> Vec<f64> {
        self.constraints()
            .iter()
            .zip(u)
            .map(|(c, &x)| c.constrain(x))
            .collect()
    }
}

/// Log density of `N(mean, sd)` at `x` with constant `sd`.
pub(crate) fn normal_lpdf<S: Scalar>(x: S, mean: S, sd: f64) -> S {
    let r = (x - mean) / sd;
    r.square() * -0.5 - (sd.ln() + LN_SQRT_2PI)
}

/// Log density of Student-t(ν, μ, s) at `x`.
pub(crate) fn student_t_lpdf<S: Scalar>(x: S, nu: f64, mu: f64, s: f64) -> S {
    use statrs::function::gamma::ln_gamma;
    let norm = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln() - s.ln();
    let r = (x - mu) / s;
    (r.square() / nu + 1.0).ln() * (-(nu + 1.0) / 2.0) + norm
}

/// Every model family, for callers that pick one at run time.
#[derive(Debug, Clone)]
pub enum Model {
    Bernoulli(BernoulliBeta),
    Cauchy(CauchyLocation),
    ToyLinReg(ToyLinReg),
    EightSchools(EightSchools),
    Bnn(BnnRegression),
    Diamonds(Diamonds),
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            Model::Bernoulli($m) => $body,
            Model::Cauchy($m) => $body,
            Model::ToyLinReg($m) => $body,
            Model::EightSchools($m) => $body,
            Model::Bnn($m) => $body,
            Model::Diamonds($m) => $body,
        }
    };
}

impl ProbabilisticModel for Model {
    fn name(&self) -> &str {
        dispatch!(self, m => m.name())
    }

    fn param_names(&self) -> Vec<String> {
        dispatch!(self, m => m.param_names())
    }

    fn constraints(&self) -> Vec<Constraint> {
        dispatch!(self, m => m.constraints())
    }

    fn dim(&self) -> usize {
        dispatch!(self, m => m.dim())
    }

    fn n_rows(&self) -> usize {
        dispatch!(self, m => m.n_rows())
    }

    fn log_prior<S: Scalar>(&self, u: &[S]) -> S {
        dispatch!(self, m => m.log_prior(u))
    }

    fn log_likelihood_rows<S: Scalar>(&self, u: &[S], rows: Option<&[usize]>) -> S {
        dispatch!(self, m => m.log_likelihood_rows(u, rows))
    }

    fn analytic_log_posterior(&self, u: &[f64]) -> Option<f64> {
        dispatch!(self, m => m.analytic_log_posterior(u))
    }

    fn analytic_log_evidence(&self) -> Option<f64> {
        dispatch!(self, m => m.analytic_log_evidence())
    }
}

/// Iterates over the selected rows.
pub(crate) fn row_indices(rows: Option<&[usize]>, n: usize) -> Box<dyn Iterator<Item = usize> + '_> {
    match rows {
        Some(r) => Box::new(r.iter().copied()),
        None => Box::new(0..n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constraint_round_trips() {
        for (c, x) in [(Constraint::Sigmoid, 0.3), (Constraint::Exp, 4.2), (Constraint::Identity, -7.0)] {
            let u = c.unconstrain(x).unwrap();
            assert!((c.constrain(u) - x).abs() < 1e-12);
        }
        assert!(Constraint::Exp.unconstrain(0.0).is_err());
        assert!(Constraint::Sigmoid.unconstrain(1.0).is_err());
    }

    #[test]
    fn student_t_matches_statrs() {
        use statrs::distribution::{Continuous, StudentsT};
        let t = StudentsT::new(8.0, 10.0, 3.0).unwrap();
        let x = 5.5;
        assert!((student_t_lpdf(x, 3.0, 8.0, 10.0) - t.ln_pdf(x)).abs() < 1e-12);
    }
}
