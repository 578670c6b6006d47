use super::{normal_lpdf, row_indices, Constraint, Dataset, ProbabilisticModel};
use crate::autodiff::{sigmoid, Scalar};
use crate::error::{Error, Result};

/// One-hidden-layer network regression with logistic units and known noise.
///
/// `μ(x) = b_out + Σₖ w_out,k · σ(b_k + w_k x)`, `y ~ N(μ(x), σ)`, all
/// weights `N(0, 1)`. Unconstrained order: `(w₁…w_H, b₁…b_H, w_out,1…w_out,H, b_out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BnnRegression {
    pub hidden: usize,
    pub sigma: f64,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl BnnRegression {
    pub const HIDDEN: usize = 3;
    pub const DEFAULT_SIGMA: f64 = 0.2;

    pub fn new(x: &[f64], y: &[f64], sigma: f64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Data(format!("{} inputs for {} responses", x.len(), y.len())));
        }
        if !(sigma > 0.0) {
            return Err(Error::Config(format!("noise sd {sigma} must be positive")));
        }
        Ok(BnnRegression {
            hidden: Self::HIDDEN,
            sigma,
            x: x.to_vec(),
            y: y.to_vec(),
        })
    }

    pub fn from_dataset(data: &Dataset, sigma: f64) -> Result<Self> {
        Self::new(data.column("x")?, data.column("y")?, sigma)
    }

    /// Network mean at `x` for a weight vector of any scalar kind.
    pub fn mean<S: Scalar>(&self, u: &[S], x: f64) -> S {
        let h = self.hidden;
        let (w, b, w_out) = (&u[..h], &u[h..2 * h], &u[2 * h..3 * h]);
        let units: Vec<S> = (0..h).map(|k| (b[k] + w[k] * x).sigmoid()).collect();
        S::dot(w_out, &units) + u[3 * h]
    }

    /// Plain-float mean, for prediction from samples.
    pub fn predict(&self, u: &[f64], x: f64) -> f64 {
        let h = self.hidden;
        u[3 * h] + (0..h).map(|k| u[2 * h + k] * sigmoid(u[h + k] + u[k] * x)).sum::<f64>()
    }
}

impl ProbabilisticModel for BnnRegression {
    fn name(&self) -> &str {
        "bnn_regression"
    }

    fn param_names(&self) -> Vec<String> {
        let h = self.hidden;
        let mut names: Vec<String> = (1..=h).map(|k| format!("w_first[{k}]")).collect();
        names.extend((1..=h).map(|k| format!("bias_first[{k}]")));
        names.extend((1..=h).map(|k| format!("w_output[{k}]")));
        names.push("bias_output".into());
        names
    }

    fn constraints(&self) -> Vec<Constraint> {
        vec![Constraint::Identity; 3 * self.hidden + 1]
    }

    fn n_rows(&self) -> usize {
        self.y.len()
    }

    fn log_prior<S: Scalar>(&self, u: &[S]) -> S {
        let zero = u[0].lift(0.0);
        let terms: Vec<S> = u.iter().map(|&w| normal_lpdf(w, zero, 1.0)).collect();
        S::sum(&terms)
    }

    fn log_likelihood_rows<S: Scalar>(&self, u: &[S], rows: Option<&[usize]>) -> S {
        let h = self.hidden;
        let w: Vec<f64> = u.iter().map(|x| x.value()).collect();
        let mut grad = vec![0.0; 3 * h + 1];
        let mut units = vec![0.0; h];
        let inv_var = 1.0 / (self.sigma * self.sigma);
        let (mut value, mut n) = (0.0, 0.0);
        for i in row_indices(rows, self.y.len()) {
            let x = self.x[i];
            let mut mu = w[3 * h];
            for k in 0..h {
                units[k] = sigmoid(w[h + k] + w[k] * x);
                mu += w[2 * h + k] * units[k];
            }
            let r = self.y[i] - mu;
            value -= 0.5 * r * r * inv_var;
            n += 1.0;
            // d loglik / d mu
            let d = r * inv_var;
            for k in 0..h {
                let dpre = d * w[2 * h + k] * units[k] * (1.0 - units[k]);
                grad[k] += dpre * x;
                grad[h + k] += dpre;
                grad[2 * h + k] += d * units[k];
            }
            grad[3 * h] += d;
        }
        if n == 0.0 {
            return u[0].lift(0.0);
        }
        value -= n * (self.sigma.ln() + super::LN_SQRT_2PI);
        S::compose(value, u, &grad)
    }
}
