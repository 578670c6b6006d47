use super::{normal_lpdf, row_indices, student_t_lpdf, Constraint, Dataset, ProbabilisticModel, LN_SQRT_2PI};
use crate::autodiff::Scalar;
use crate::error::{Error, Result};

/// `y ~ N(b + w₁x₁ + w₂x₂, σ)` with `b, w ~ N(0, 10)`, `σ ~ LogNormal(0.5, 1)`.
///
/// Unconstrained order: `(b, w₁, w₂, log σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyLinReg {
    x: Vec<[f64; 2]>,
    y: Vec<f64>,
}

impl ToyLinReg {
    pub fn new(x: &[[f64; 2]], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Data(format!("{} predictor rows for {} responses", x.len(), y.len())));
        }
        Ok(ToyLinReg {
            x: x.to_vec(),
            y: y.to_vec(),
        })
    }

    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let (x1, x2, y) = (data.column("x1")?, data.column("x2")?, data.column("y")?);
        let x: Vec<[f64; 2]> = x1.iter().zip(x2).map(|(&a, &b)| [a, b]).collect();
        Self::new(&x, y)
    }
}

impl ProbabilisticModel for ToyLinReg {
    fn name(&self) -> &str {
        "toy_linreg"
    }

    fn param_names(&self) -> Vec<String> {
        ["mu0", "beta1", "beta2", "sigma"].map(String::from).to_vec()
    }

    fn constraints(&self) -> Vec<Constraint> {
        vec![Constraint::Identity, Constraint::Identity, Constraint::Identity, Constraint::Exp]
    }

    fn n_rows(&self) -> usize {
        self.y.len()
    }

    fn log_prior<S: Scalar>(&self, u: &[S]) -> S {
        let zero = u[0].lift(0.0);
        // LogNormal(σ; 0.5, 1) · σ collapses to N(log σ; 0.5, 1).
        normal_lpdf(u[0], zero, 10.0)
            + normal_lpdf(u[1], zero, 10.0)
            + normal_lpdf(u[2], zero, 10.0)
            + normal_lpdf(u[3], u[3].lift(0.5), 1.0)
    }

    fn log_likelihood_rows<S: Scalar>(&self, u: &[S], rows: Option<&[usize]>) -> S {
        let [b, w1, w2, log_sigma] = [u[0].value(), u[1].value(), u[2].value(), u[3].value()];
        let inv_var = (-2.0 * log_sigma).exp();
        let (mut n, mut ss) = (0.0, 0.0);
        let mut g = [0.0; 4];
        for i in row_indices(rows, self.y.len()) {
            let [x1, x2] = self.x[i];
            let r = b + w1 * x1 + w2 * x2 - self.y[i];
            n += 1.0;
            ss += r * r;
            g[0] -= r;
            g[1] -= r * x1;
            g[2] -= r * x2;
        }
        if n == 0.0 {
            return u[0].lift(0.0);
        }
        g[..3].iter_mut().for_each(|v| *v *= inv_var);
        g[3] = ss * inv_var - n;
        let value = -0.5 * ss * inv_var - n * log_sigma - n * LN_SQRT_2PI;
        S::compose(value, &u[..4], &g)
    }
}

/// Gaussian linear model on centered predictors.
///
/// `b ~ N(0, 1)`, `Intercept ~ t(3, 8, 10)`, `σ ~ half-t(3, 0, 10)`,
/// `Y ~ N(Intercept + X_c b, σ)`. Unconstrained order:
/// `(b₁ … b_K, Intercept, log σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Diamonds {
    predictors: Vec<String>,
    means: Vec<f64>,
    /// Row-major `N × K` centered design.
    xc: Vec<f64>,
    y: Vec<f64>,
}

impl Diamonds {
    pub const RESPONSE: &'static str = "Y";

    /// Uses every column except the response as a predictor, in file order.
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let y = data.column(Self::RESPONSE)?.to_vec();
        let predictors: Vec<String> = data
            .names()
            .iter()
            .filter(|n| *n != Self::RESPONSE)
            .cloned()
            .collect();
        if predictors.is_empty() {
            return Err(Error::Data("no predictor columns".into()));
        }
        if y.is_empty() {
            return Err(Error::Data("empty design".into()));
        }
        let n = y.len();
        let k = predictors.len();
        let mut means = Vec::with_capacity(k);
        let mut xc = vec![0.0; n * k];
        for (j, name) in predictors.iter().enumerate() {
            let col = data.column(name)?;
            let mean = col.iter().sum::<f64>() / n as f64;
            means.push(mean);
            for (i, &v) in col.iter().enumerate() {
                xc[i * k + j] = v - mean;
            }
        }
        Ok(Diamonds {
            predictors,
            means,
            xc,
            y,
        })
    }

    pub fn n_predictors(&self) -> usize {
        self.predictors.len()
    }

    /// Column means removed during centering.
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn centered_design(&self) -> &[f64] {
        &self.xc
    }

    pub fn response(&self) -> &[f64] {
        &self.y
    }

    fn mean_at(&self, i: usize, b: &[f64], intercept: f64) -> f64 {
        let k = self.predictors.len();
        let row = &self.xc[i * k..(i + 1) * k];
        intercept + row.iter().zip(b).map(|(x, w)| x * w).sum::<f64>()
    }
}

impl ProbabilisticModel for Diamonds {
    fn name(&self) -> &str {
        "diamonds"
    }

    fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.predictors.iter().map(|p| format!("b[{p}]")).collect();
        names.push("Intercept".into());
        names.push("sigma".into());
        names
    }

    fn constraints(&self) -> Vec<Constraint> {
        let mut c = vec![Constraint::Identity; self.predictors.len() + 1];
        c.push(Constraint::Exp);
        c
    }

    fn n_rows(&self) -> usize {
        self.y.len()
    }

    fn log_prior<S: Scalar>(&self, u: &[S]) -> S {
        let k = self.predictors.len();
        let zero = u[0].lift(0.0);
        let coefs: Vec<S> = u[..k].iter().map(|&b| normal_lpdf(b, zero, 1.0)).collect();
        let sigma = u[k + 1].exp();
        // Truncation at zero halves the t(3, 0, 10) mass: + ln 2.
        S::sum(&coefs)
            + student_t_lpdf(u[k], 3.0, 8.0, 10.0)
            + student_t_lpdf(sigma, 3.0, 0.0, 10.0)
            + std::f64::consts::LN_2
            + u[k + 1]
    }

    fn log_likelihood_rows<S: Scalar>(&self, u: &[S], rows: Option<&[usize]>) -> S {
        let k = self.predictors.len();
        let vals: Vec<f64> = u.iter().map(|v| v.value()).collect();
        let (b, intercept, log_sigma) = (&vals[..k], vals[k], vals[k + 1]);
        let inv_var = (-2.0 * log_sigma).exp();
        let mut n = 0usize;
        let mut ss = 0.0;
        let mut grad = vec![0.0; k + 2];
        for i in row_indices(rows, self.y.len()) {
            let r = self.y[i] - self.mean_at(i, b, intercept);
            ss += r * r;
            n += 1;
            if S::TRACED {
                let row = &self.xc[i * k..(i + 1) * k];
                for (g, x) in grad[..k].iter_mut().zip(row) {
                    *g += r * x;
                }
                grad[k] += r;
            }
        }
        let nf = n as f64;
        let value = -0.5 * ss * inv_var - nf * log_sigma - nf * LN_SQRT_2PI;
        if !S::TRACED {
            return S::compose(value, &[], &[]);
        }
        for g in &mut grad[..=k] {
            *g *= inv_var;
        }
        grad[k + 1] = ss * inv_var - nf;
        S::compose(value, u, &grad)
    }
}
