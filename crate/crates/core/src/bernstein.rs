//! One-dimensional monotone Bernstein-polynomial flow.
//!
//! The polynomial `f(z) = Σᵢ Beᵢ(z) ϑᵢ / (M + 1)` with `Beᵢ` the
//! Beta(i + 1, M − i + 1) density is strictly increasing on `[0, 1]`
//! whenever the coefficients are. Monotone coefficients are obtained from
//! unconstrained ones by `ϑ₀ = ϑ'₀`, `ϑᵢ = ϑᵢ₋₁ + softplus(ϑ'ᵢ)`.
//!
//! [`SandwichFlow`] maps the real line onto an interval with
//! `θ = α · f(σ(a z + b)) + β`, where `a`, `α` are softplus-positive.

use std::sync::Arc;

use crate::autodiff::{sigmoid, softplus, softplus_inv, Scalar};
use crate::error::{Error, Result};

/// Sigmoid outputs are clamped to `[ε, 1 − ε]`.
pub const SIGMOID_CLAMP: f64 = 1e-6;

/// Orders above this overflow the binomial table.
pub const MAX_ORDER: usize = 1000;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn std_normal_ln_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

fn ln_binomial_row(n: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    row.push(0.0);
    for k in 1..=n {
        acc += ((n - k + 1) as f64).ln() - (k as f64).ln();
        row.push(acc);
    }
    row
}

/// Binomial tables for the Bernstein bases of order `M`, `M − 1` and `M − 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinBasis {
    order: usize,
    ln_binom: Vec<f64>,
    // binom[d][i] = C(M - d, i)
    binom: [Vec<f64>; 3],
}

/// Basis values at one point.
#[derive(Debug, Clone, Default)]
pub struct BasisValues {
    /// `b_{i,M}(z)` for `i = 0..=M`.
    pub order_m: Vec<f64>,
    /// `b_{i,M−1}(z)`, empty for `M = 0`.
    pub order_m1: Vec<f64>,
    /// `b_{i,M−2}(z)`, empty for `M < 2`.
    pub order_m2: Vec<f64>,
    // z^i and (1 − z)^i, kept to avoid reallocating per point
    zp: Vec<f64>,
    wp: Vec<f64>,
}

impl BernsteinBasis {
    pub fn new(order: usize) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(Error::Domain(format!(
                "Bernstein order {order} exceeds {MAX_ORDER}"
            )));
        }
        let ln_binom = ln_binomial_row(order);
        let row = |d: usize| -> Vec<f64> {
            if d > order {
                Vec::new()
            } else {
                ln_binomial_row(order - d)
                    .iter()
                    .map(|l| l.exp().round())
                    .collect()
            }
        };
        Ok(BernsteinBasis {
            order,
            ln_binom,
            binom: [row(0), row(1), row(2)],
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn ln_binomial(&self, i: usize) -> f64 {
        self.ln_binom[i]
    }

    /// Evaluates the bases up to `derivs` orders below `M` (0, 1 or 2).
    pub fn eval(&self, z: f64, derivs: usize, out: &mut BasisValues) {
        let m = self.order;
        let w = 1.0 - z;
        let (zp, wp) = (&mut out.zp, &mut out.wp);
        zp.clear();
        wp.clear();
        let (mut zi, mut wi) = (1.0, 1.0);
        for _ in 0..=m {
            zp.push(zi);
            wp.push(wi);
            zi *= z;
            wi *= w;
        }
        for (d, dst) in [&mut out.order_m, &mut out.order_m1, &mut out.order_m2]
            .into_iter()
            .enumerate()
        {
            dst.clear();
            if d > derivs || d > m {
                continue;
            }
            let n = m - d;
            let binom = &self.binom[d];
            dst.extend((0..=n).map(|i| binom[i] * zp[i] * wp[n - i]));
        }
    }

    fn values(&self, z: f64, derivs: usize) -> BasisValues {
        let mut out = BasisValues::default();
        self.eval(z, derivs, &mut out);
        out
    }
}

/// Density of Beta(i + 1, M − i + 1) at `z`.
pub fn beta_basis_density(i: usize, order: usize, z: f64) -> Result<f64> {
    if i > order {
        return Err(Error::Domain(format!("basis index {i} exceeds order {order}")));
    }
    check_unit(z)?;
    let ln_c: f64 = ln_binomial_row(order)[i];
    let term = |base: f64, exp: usize| if exp == 0 { 1.0 } else { base.powi(exp as i32) };
    Ok((order as f64 + 1.0) * ln_c.exp() * term(z, i) * term(1.0 - z, order - i))
}

fn check_unit(z: f64) -> Result<()> {
    if (0.0..=1.0).contains(&z) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{z} is outside [0, 1]")))
    }
}

/// Monotone coefficients `ϑ₀ = ϑ'₀`, `ϑᵢ = ϑᵢ₋₁ + softplus(ϑ'ᵢ)`.
pub fn reparam_coefficients<S: Scalar>(raw: &[S]) -> Vec<S> {
    let mut out = Vec::with_capacity(raw.len());
    if let Some(&first) = raw.first() {
        out.push(first);
        for &r in &raw[1..] {
            let prev = *out.last().unwrap();
            out.push(prev + r.softplus());
        }
    }
    out
}

/// Unconstrained and monotone coefficient vectors of one polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinCoefficients {
    raw: Vec<f64>,
    derived: Vec<f64>,
}

impl BernsteinCoefficients {
    pub fn from_raw(raw: Vec<f64>) -> Result<Self> {
        if raw.len() < 2 {
            return Err(Error::Domain("a Bernstein flow needs order M ≥ 1".into()));
        }
        if raw.iter().any(|r| !r.is_finite()) {
            return Err(Error::Domain("non-finite raw coefficient".into()));
        }
        let derived = reparam_coefficients(&raw);
        Ok(BernsteinCoefficients { raw, derived })
    }

    /// Raw values whose derived coefficients run linearly from `lo` to `hi`.
    pub fn ramp(order: usize, lo: f64, hi: f64) -> Result<Self> {
        let step = softplus_inv((hi - lo) / order as f64);
        let mut raw = vec![step; order + 1];
        raw[0] = lo;
        Self::from_raw(raw)
    }

    pub fn order(&self) -> usize {
        self.raw.len() - 1
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn derived(&self) -> &[f64] {
        &self.derived
    }
}

fn poly_value(basis: &BasisValues, theta: &[f64]) -> f64 {
    basis.order_m.iter().zip(theta).map(|(b, t)| b * t).sum()
}

fn poly_slope(basis: &BasisValues, theta: &[f64]) -> f64 {
    let m = theta.len() - 1;
    m as f64
        * basis
            .order_m1
            .iter()
            .zip(theta.windows(2))
            .map(|(b, w)| b * (w[1] - w[0]))
            .sum::<f64>()
}

fn poly_curvature(basis: &BasisValues, theta: &[f64]) -> f64 {
    let m = theta.len() - 1;
    if m < 2 {
        return 0.0;
    }
    (m * (m - 1)) as f64
        * basis
            .order_m2
            .iter()
            .zip(theta.windows(3))
            .map(|(b, w)| b * (w[2] - 2.0 * w[1] + w[0]))
            .sum::<f64>()
}

/// `Σᵢ Beᵢ(z) ϑᵢ / (M + 1)` for given (already monotone) coefficients.
pub fn bp_forward(theta: &[f64], z: f64) -> Result<f64> {
    check_unit(z)?;
    let basis = BernsteinBasis::new(theta.len() - 1)?;
    Ok(poly_value(&basis.values(z, 0), theta))
}

/// Derivative of [`bp_forward`] in `z`, via the degree-lowered basis.
pub fn bp_derivative(theta: &[f64], z: f64) -> Result<f64> {
    check_unit(z)?;
    let basis = BernsteinBasis::new(theta.len() - 1)?;
    Ok(poly_slope(&basis.values(z, 1), theta))
}

/// Polynomial value and slope at `v` as traced scalars over `theta` and `v`.
pub fn bernstein_value_slope<S: Scalar>(basis: &BernsteinBasis, theta: &[S], v: S) -> (S, S) {
    let m = basis.order;
    debug_assert_eq!(theta.len(), m + 1);
    let coeffs: Vec<f64> = theta.iter().map(|t| t.value()).collect();
    let vals = basis.values(v.value(), if S::TRACED { 2 } else { 1 });
    let f = poly_value(&vals, &coeffs);
    let fp = poly_slope(&vals, &coeffs);
    if !S::TRACED {
        return (S::compose(f, &[], &[]), S::compose(fp, &[], &[]));
    }
    let fpp = poly_curvature(&vals, &coeffs);
    let mut parents = theta.to_vec();
    parents.push(v);
    let mut df = vals.order_m.clone();
    df.push(fp);
    let mf = m as f64;
    let mut dfp: Vec<f64> = (0..=m)
        .map(|i| {
            let left = if i > 0 { vals.order_m1[i - 1] } else { 0.0 };
            let right = if i < m { vals.order_m1[i] } else { 0.0 };
            mf * (left - right)
        })
        .collect();
    dfp.push(fpp);
    (S::compose(f, &parents, &df), S::compose(fp, &parents, &dfp))
}

/// Reusable buffers for [`monotone_kernel`].
#[derive(Debug, Clone, Default)]
pub struct KernelScratch {
    vals: BasisValues,
    theta: Vec<f64>,
    sig: Vec<f64>,
}

/// Plain-float core of [`monotone_bernstein_from_raw`]: returns `(f, f')`
/// and writes `∂f/∂rawₖ` and `∂f'/∂rawₖ` into `df` and `dfp`.
pub fn monotone_kernel(
    basis: &BernsteinBasis,
    raw: &[f64],
    v: f64,
    scratch: &mut KernelScratch,
    df: &mut [f64],
    dfp: &mut [f64],
) -> (f64, f64) {
    let m = basis.order;
    debug_assert_eq!(raw.len(), m + 1);
    let KernelScratch { vals, theta, sig } = scratch;
    theta.clear();
    sig.clear();
    sig.push(1.0);
    let mut acc = raw[0];
    theta.push(acc);
    for &r in &raw[1..] {
        // softplus and its derivative share one exponential
        let e = (-r.abs()).exp();
        let sp = r.max(0.0) + e.ln_1p();
        acc += sp;
        theta.push(acc);
        sig.push(if r >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) });
    }
    basis.eval(v, 1, vals);
    let f = poly_value(vals, theta);
    let fp = poly_slope(vals, theta);
    // ϑᵢ depends on raw_k for k ≤ i: ∂ϑᵢ/∂raw₀ = 1, ∂ϑᵢ/∂raw_k = σ(raw_k),
    // so the raw partials are reverse cumulative sums of the ϑ partials.
    let mf = m as f64;
    let lower = &vals.order_m1;
    let (mut tail_f, mut tail_fp) = (0.0, 0.0);
    for k in (0..=m).rev() {
        let left = if k > 0 { lower[k - 1] } else { 0.0 };
        let right = if k < m { lower[k] } else { 0.0 };
        tail_f += vals.order_m[k];
        tail_fp += mf * (left - right);
        df[k] = sig[k] * tail_f;
        dfp[k] = sig[k] * tail_fp;
    }
    (f, fp)
}

/// Value and slope of the monotone polynomial built from raw coefficients,
/// evaluated at a constant `v`. The reparameterization is fused into the
/// node so the cost stays linear in `M`.
pub fn monotone_bernstein_from_raw<S: Scalar>(basis: &BernsteinBasis, raw: &[S], v: f64) -> (S, S) {
    let m = basis.order;
    let raw_vals: Vec<f64> = raw.iter().map(|r| r.value()).collect();
    let mut df = vec![0.0; m + 1];
    let mut dfp = vec![0.0; m + 1];
    let (f, fp) = monotone_kernel(basis, &raw_vals, v, &mut KernelScratch::default(), &mut df, &mut dfp);
    if !S::TRACED {
        return (S::compose(f, &[], &[]), S::compose(fp, &[], &[]));
    }
    (S::compose(f, raw, &df), S::compose(fp, raw, &dfp))
}

/// Clamped sigmoid and `ln(v (1 − v))`; a clamped value is constant.
pub fn squash<S: Scalar>(u: S) -> (S, S) {
    let s = sigmoid(u.value());
    if s < SIGMOID_CLAMP || s > 1.0 - SIGMOID_CLAMP {
        let v = s.clamp(SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP);
        (u.lift(v), u.lift((v * (1.0 - v)).ln()))
    } else {
        (u.sigmoid(), u.log_sigmoid() + (-u).log_sigmoid())
    }
}

/// `(θ, log |dθ/dz|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOutput {
    pub theta: f64,
    pub log_det: f64,
}

/// Sandwich flow parameters resolved for evaluation, generic over the scalar.
///
/// When traced, each [`forward`](Self::forward) call records exactly two
/// composite nodes (`θ` and `log_det`) whose parents are the monotone
/// coefficients and the four affine parameters.
pub struct SandwichView<'b, S> {
    basis: &'b BernsteinBasis,
    // ϑ₀ … ϑ_M, a, b, α, β
    parents: Vec<S>,
    coeffs: Vec<f64>,
    a: f64,
    b: f64,
    alpha: f64,
    beta: f64,
    scratch: std::cell::RefCell<(BasisValues, Vec<f64>)>,
}

impl<'b, S: Scalar> SandwichView<'b, S> {
    /// `params = [ϑ'₀ … ϑ'_M, a', b, α', β]`.
    pub fn new(basis: &'b BernsteinBasis, params: &[S]) -> Self {
        let m = basis.order;
        assert_eq!(params.len(), m + 5, "sandwich parameter length");
        let mut parents = reparam_coefficients(&params[..=m]);
        let a = params[m + 1].softplus();
        let alpha = params[m + 3].softplus();
        parents.extend([a, params[m + 2], alpha, params[m + 4]]);
        SandwichView {
            basis,
            coeffs: parents[..=m].iter().map(|t| t.value()).collect(),
            a: a.value(),
            b: params[m + 2].value(),
            alpha: alpha.value(),
            beta: params[m + 4].value(),
            parents,
            scratch: Default::default(),
        }
    }

    /// `(θ, log_det)` at base point `z`.
    pub fn forward(&self, z: f64) -> (S, S) {
        let m = self.basis.order;
        let u = self.a * z + self.b;
        let s = sigmoid(u);
        let clamped = !(SIGMOID_CLAMP..=1.0 - SIGMOID_CLAMP).contains(&s);
        let v = s.clamp(SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP);
        // ln(v (1 − v)) from the log-sigmoids, accurate in the tails
        let ln_v1v = if clamped {
            (v * (1.0 - v)).ln()
        } else {
            -softplus(-u) - softplus(u)
        };
        let mut scratch = self.scratch.borrow_mut();
        let (vals, partials) = &mut *scratch;
        self.basis.eval(v, if S::TRACED { 2 } else { 1 }, vals);
        let f = poly_value(vals, &self.coeffs);
        let fp = poly_slope(vals, &self.coeffs);
        let theta = self.alpha * f + self.beta;
        let log_det = self.a.ln() + ln_v1v + fp.ln() + self.alpha.ln();
        if !S::TRACED {
            return (S::compose(theta, &[], &[]), S::compose(log_det, &[], &[]));
        }
        let fpp = poly_curvature(vals, &self.coeffs);
        // dv/du and d ln(v(1−v))/du vanish once the sigmoid is clamped
        let (dv, dln) = if clamped { (0.0, 0.0) } else { (v * (1.0 - v), 1.0 - 2.0 * v) };

        partials.clear();
        partials.extend(vals.order_m.iter().map(|bi| self.alpha * bi));
        let d_u = self.alpha * fp * dv;
        partials.extend([d_u * z, d_u, f, 1.0]);
        let theta = S::compose(theta, &self.parents, partials);

        partials.clear();
        let mf = m as f64;
        let lower = &vals.order_m1;
        partials.extend((0..=m).map(|i| {
            let left = if i > 0 { lower[i - 1] } else { 0.0 };
            let right = if i < m { lower[i] } else { 0.0 };
            mf * (left - right) / fp
        }));
        let d_u = dln + fpp / fp * dv;
        partials.extend([1.0 / self.a + d_u * z, d_u, 1.0 / self.alpha, 0.0]);
        let log_det = S::compose(log_det, &self.parents, partials);
        (theta, log_det)
    }
}

/// The one-dimensional variational bijection `l₂ ∘ f ∘ σ ∘ l₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichFlow {
    coeffs: BernsteinCoefficients,
    a_raw: f64,
    b: f64,
    alpha_raw: f64,
    beta: f64,
    basis: Arc<BernsteinBasis>,
}

impl SandwichFlow {
    pub fn new(coeffs: BernsteinCoefficients, a_raw: f64, b: f64, alpha_raw: f64, beta: f64) -> Result<Self> {
        if ![a_raw, b, alpha_raw, beta].iter().all(|x| x.is_finite()) {
            return Err(Error::Domain("non-finite affine parameter".into()));
        }
        let basis = Arc::new(BernsteinBasis::new(coeffs.order())?);
        Ok(SandwichFlow {
            coeffs,
            a_raw,
            b,
            alpha_raw,
            beta,
            basis,
        })
    }

    /// Starting point for training: `a = α = 1`, `b = β = 0`, coefficients
    /// spanning `[−3, 3]` linearly.
    pub fn initial(order: usize) -> Result<Self> {
        let one = softplus_inv(1.0);
        Self::new(BernsteinCoefficients::ramp(order, -3.0, 3.0)?, one, 0.0, one, 0.0)
    }

    /// Inverse of [`SandwichFlow::params`].
    pub fn from_params(order: usize, params: &[f64]) -> Result<Self> {
        if params.len() != order + 5 {
            return Err(Error::Data(format!(
                "sandwich flow of order {order} takes {} parameters, got {}",
                order + 5,
                params.len()
            )));
        }
        let coeffs = BernsteinCoefficients::from_raw(params[..=order].to_vec())?;
        let p = &params[order + 1..];
        Self::new(coeffs, p[0], p[1], p[2], p[3])
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.coeffs.raw().to_vec();
        p.extend_from_slice(&[self.a_raw, self.b, self.alpha_raw, self.beta]);
        p
    }

    pub fn order(&self) -> usize {
        self.coeffs.order()
    }

    pub fn coefficients(&self) -> &BernsteinCoefficients {
        &self.coeffs
    }

    pub fn basis(&self) -> &BernsteinBasis {
        &self.basis
    }

    pub fn slope(&self) -> f64 {
        softplus(self.a_raw)
    }

    pub fn scale(&self) -> f64 {
        softplus(self.alpha_raw)
    }

    pub fn shift(&self) -> f64 {
        self.beta
    }

    pub fn with_scale(&self, alpha: f64) -> Result<Self> {
        Self::new(self.coeffs.clone(), self.a_raw, self.b, softplus_inv(alpha), self.beta)
    }

    /// Open interval of attainable `θ`.
    pub fn range(&self) -> (f64, f64) {
        let d = self.coeffs.derived();
        let (alpha, beta) = (self.scale(), self.beta);
        (alpha * d[0] + beta, alpha * d[d.len() - 1] + beta)
    }

    pub fn view(&self) -> SandwichView<'_, f64> {
        SandwichView::new(&self.basis, &self.params())
    }

    pub fn forward(&self, z: f64) -> FlowOutput {
        let (theta, log_det) = self.view().forward(z);
        FlowOutput { theta, log_det }
    }

    /// `log N(z; 0, 1) − log_det`: log density of `θ(z)` under the flow.
    pub fn log_q(&self, z: f64) -> f64 {
        std_normal_ln_pdf(z) - self.forward(z).log_det
    }

    /// Base point mapping to `theta`, by bracketing bisection then Newton.
    pub fn inverse(&self, theta: f64, tol: f64) -> Result<f64> {
        let (lo_attain, hi_attain) = self.range();
        let out_of_range = || Error::Range {
            value: theta,
            lo: lo_attain,
            hi: hi_attain,
        };
        if !(theta > lo_attain && theta < hi_attain) || tol <= 0.0 {
            return Err(out_of_range());
        }
        let view = self.view();
        let eval = |z: f64| view.forward(z);
        // The clamp makes the map flat beyond |a z + b| ≈ 13.8.
        let z_limit = ((1.0 / SIGMOID_CLAMP).ln() + self.b.abs()) / self.slope();
        let (mut lo, mut hi) = (-1.0, 1.0);
        while eval(lo).0 >= theta {
            lo *= 2.0;
            if lo < -2.0 * z_limit {
                return Err(out_of_range());
            }
        }
        while eval(hi).0 <= theta {
            hi *= 2.0;
            if hi > 2.0 * z_limit {
                return Err(out_of_range());
            }
        }
        let mut z = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (t, log_det) = eval(z);
            let resid = t - theta;
            if resid.abs() <= tol * 1e-3 {
                return Ok(z);
            }
            if resid > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            let newton = z - resid / log_det.exp();
            z = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < f64::EPSILON * z.abs().max(1.0) {
                break;
            }
        }
        let resid = (eval(z).0 - theta).abs();
        if resid <= tol {
            Ok(z)
        } else {
            Err(out_of_range())
        }
    }
}

/// [`SandwichFlow::forward`] as a free function.
pub fn sandwich_forward(flow: &SandwichFlow, z: f64) -> FlowOutput {
    flow.forward(z)
}

pub fn sandwich_inverse(flow: &SandwichFlow, theta: f64, tol: f64) -> Result<f64> {
    flow.inverse(theta, tol)
}

pub fn log_q_density_1d(flow: &SandwichFlow, z: f64) -> f64 {
    flow.log_q(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{check_gradient, Var};

    fn identity_like(order: usize) -> SandwichFlow {
        let m = order as f64;
        let one = softplus_inv(1.0);
        let mut raw = vec![softplus_inv(1.0 / m); order + 1];
        raw[0] = 0.0;
        SandwichFlow::new(BernsteinCoefficients::from_raw(raw).unwrap(), one, 0.0, one, 0.0).unwrap()
    }

    #[test]
    fn beta_density_examples() {
        assert!((beta_basis_density(0, 2, 0.0).unwrap() - 3.0).abs() < 1e-14);
        assert!((beta_basis_density(1, 2, 0.5).unwrap() - 1.5).abs() < 1e-14);
        assert!((beta_basis_density(5, 5, 1.0).unwrap() - 6.0).abs() < 1e-13);
    }

    #[test]
    fn beta_density_domain_errors() {
        assert!(beta_basis_density(3, 2, 0.5).is_err());
        assert!(beta_basis_density(0, 2, 1.5).is_err());
        assert!(beta_basis_density(0, 2, -0.1).is_err());
    }

    #[test]
    fn reparam_examples() {
        let d = reparam_coefficients(&[0.0, 0.0, 0.0]);
        let ln2 = std::f64::consts::LN_2;
        assert!((d[1] - ln2).abs() < 1e-15 && (d[2] - 2.0 * ln2).abs() < 1e-15);
        assert_eq!(reparam_coefficients(&[-5.0]), vec![-5.0]);
        let d = reparam_coefficients(&[1.0, -20.0, -20.0]);
        assert_eq!(d[0], 1.0);
        assert!(d[1] > d[0] && d[2] > d[1]);
        assert!(d[1] - d[0] < 1e-8 && d[2] - d[1] < 1e-8);
    }

    #[test]
    fn bp_forward_examples() {
        let theta = [2.5; 6];
        for z in [0.0, 0.3, 1.0] {
            assert!((bp_forward(&theta, z).unwrap() - 2.5).abs() < 1e-14);
        }
        let lin: Vec<f64> = (0..=7).map(|i| i as f64 / 7.0).collect();
        for z in [0.0, 0.12, 0.5, 0.93, 1.0] {
            assert!((bp_forward(&lin, z).unwrap() - z).abs() < 1e-14);
            assert!((bp_derivative(&lin, z).unwrap() - 1.0).abs() < 1e-13);
        }
        assert_eq!(bp_forward(&[-2.0, 0.0, 5.0], 0.0).unwrap(), -2.0);
        assert_eq!(bp_derivative(&theta, 0.4).unwrap(), 0.0);
        assert!(bp_forward(&theta, 1.01).is_err());
        assert!(bp_derivative(&theta, -0.01).is_err());
    }

    #[test]
    fn bp_derivative_matches_fd() {
        let theta = reparam_coefficients(&[-1.0, 0.3, -0.5, 1.2, 0.1, -2.0]);
        let z = 0.37;
        let h = 1e-6;
        let fd = (bp_forward(&theta, z + h).unwrap() - bp_forward(&theta, z - h).unwrap()) / (2.0 * h);
        let d = bp_derivative(&theta, z).unwrap();
        assert!((d - fd).abs() <= 1e-6 * d.abs());
    }

    #[test]
    fn identity_like_sandwich() {
        let flow = identity_like(6);
        for z in [-2.0, 0.0, 0.7, 3.0] {
            let out = flow.forward(z);
            let s = sigmoid(z);
            assert!((out.theta - s).abs() < 1e-12);
            assert!((out.log_det - (s * (1.0 - s)).ln()).abs() < 1e-10);
        }
        let expected = std_normal_ln_pdf(0.0) - 0.25f64.ln();
        assert!((flow.log_q(0.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn doubling_scale_shifts_log_q() {
        let flow = SandwichFlow::from_params(4, &[-0.3, 0.2, -1.0, 0.5, 0.0, 0.4, 0.1, 0.7, -0.2]).unwrap();
        let doubled = flow.with_scale(2.0 * flow.scale()).unwrap();
        for z in [-1.0, 0.2, 1.5] {
            let diff = doubled.log_q(z) - flow.log_q(z);
            assert!((diff + std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_and_range_error() {
        let flow = SandwichFlow::from_params(5, &[-1.0, 0.4, -0.2, 0.9, 0.1, -0.6, 0.8, 0.3, 0.2, 0.5]).unwrap();
        let theta = flow.forward(0.7).theta;
        let z = flow.inverse(theta, 1e-10).unwrap();
        assert!((z - 0.7).abs() < 1e-10);
        let (_, hi) = flow.range();
        assert!(matches!(flow.inverse(hi + 1.0, 1e-10), Err(Error::Range { .. })));
    }

    #[test]
    fn sandwich_gradient_matches_fd() {
        let order = 6;
        let params = [-0.8, 0.3, -1.0, 0.2, 0.6, -0.4, 0.1, 0.5, -0.3, 0.2, 0.7];
        let basis = BernsteinBasis::new(order).unwrap();
        for z in [-1.3, 0.2, 0.9] {
            let check = check_gradient(
                &params,
                |_, p: &[Var<'_>]| {
                    let (theta, log_det) = SandwichView::new(&basis, p).forward(z);
                    theta + log_det
                },
                |p| {
                    let (theta, log_det) = SandwichView::new(&basis, p).forward(z);
                    theta + log_det
                },
            )
            .unwrap();
            assert!(check.passed, "z = {z}: {check:?}");
        }
    }

    #[test]
    fn fused_raw_kernel_matches_fd() {
        let basis = BernsteinBasis::new(5).unwrap();
        let raw = [0.4, -0.3, 1.1, -2.0, 0.5, 0.0];
        for v in [0.05, 0.5, 0.81] {
            for which in 0..2 {
                let check = check_gradient(
                    &raw,
                    |_, r: &[Var<'_>]| {
                        let (f, fp) = monotone_bernstein_from_raw(&basis, r, v);
                        if which == 0 { f } else { fp }
                    },
                    |r| {
                        let (f, fp) = monotone_bernstein_from_raw(&basis, r, v);
                        if which == 0 { f } else { fp }
                    },
                )
                .unwrap();
                assert!(check.passed, "v = {v}, output {which}: {check:?}");
            }
        }
    }

    #[test]
    fn clamped_extremes_stay_finite() {
        let flow = SandwichFlow::initial(10).unwrap();
        for z in [-40.0, -15.0, 15.0, 40.0] {
            let out = flow.forward(z);
            assert!(out.theta.is_finite() && out.log_det.is_finite());
        }
    }

    #[test]
    fn high_order_basis_is_finite() {
        let basis = BernsteinBasis::new(256).unwrap();
        let vals = basis.values(0.5, 2);
        let total: f64 = vals.order_m.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(BernsteinBasis::new(MAX_ORDER + 1).is_err());
    }
}
