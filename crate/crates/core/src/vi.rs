//! Stochastic ELBO maximization.
//!
//! For base draws `z_s ~ N(0, I)` and `θ_s = T_λ(z_s)`,
//!
//! ```text
//! ELBO ≈ (1/S) Σ_s log p(D | θ_s) − (1/S) Σ_s [log q_λ(θ_s) − log p(θ_s)],
//! log q_λ(θ_s) = log N(z_s) − log |det ∇T_λ(z_s)|.
//! ```
//!
//! Gradients flow through `θ_s` with `z_s` held fixed (pathwise estimator).
//! Samples are split into fixed-size chunks, each evaluated on its own tape
//! and summed in chunk order, so results do not depend on the thread count.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    compare_gradients, GradCheck, ParamVector, Scalar, Tape, Var, FD_ABS_TOL, FD_REL_TOL, FD_SMALL_GRAD, FD_STEP,
};
use crate::bernstein::{std_normal_ln_pdf, SandwichFlow, SandwichView};
use crate::error::{Error, Result};
use crate::maf::{FlowScratch, MultivariateBernsteinFlow, DEFAULT_HIDDEN};
use crate::models::ProbabilisticModel;

/// Samples per tape.
const CHUNK: usize = 64;

/// `q(θ) = Πⱼ N(θⱼ; mⱼ, exp(rⱼ)²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldGaussian {
    pub means: Vec<f64>,
    pub log_sds: Vec<f64>,
}

impl MeanFieldGaussian {
    /// `m = 0`, `r = 0`.
    pub fn new(p: usize) -> Self {
        MeanFieldGaussian {
            means: vec![0.0; p],
            log_sds: vec![0.0; p],
        }
    }

    pub fn sds(&self) -> Vec<f64> {
        self.log_sds.iter().map(|r| r.exp()).collect()
    }
}

pub fn mean_field_gaussian_family(p: usize) -> Result<VariationalFamily> {
    if p == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    Ok(VariationalFamily::MeanField(MeanFieldGaussian::new(p)))
}

/// A trainable approximation `q_λ`.
#[derive(Debug, Clone, PartialEq)]
pub enum VariationalFamily {
    Flow1D(SandwichFlow),
    FlowMV(MultivariateBernsteinFlow),
    MeanField(MeanFieldGaussian),
}

/// A family with its parameters bound to scalars of one kind.
enum Bound<'a, S> {
    Flow1D(SandwichView<'a, S>),
    FlowMV(&'a MultivariateBernsteinFlow, &'a [S]),
    MeanField(&'a [S], &'a [S], S),
}

impl<S: Scalar> Bound<'_, S> {
    fn forward(&self, z: &[f64]) -> (Vec<S>, S) {
        match self {
            Bound::Flow1D(view) => {
                let (theta, log_det) = view.forward(z[0]);
                (vec![theta], log_det)
            }
            Bound::FlowMV(flow, params) => flow.forward_with(params, z),
            Bound::MeanField(m, r, sum_r) => {
                let theta = m.iter().zip(*r).zip(z).map(|((&m, &r), &z)| m + r.exp() * z).collect();
                (theta, *sum_r)
            }
        }
    }
}

impl VariationalFamily {
    pub fn kind(&self) -> FamilyKind {
        match self {
            VariationalFamily::Flow1D(_) | VariationalFamily::FlowMV(_) => FamilyKind::Bfvi,
            VariationalFamily::MeanField(_) => FamilyKind::MeanField,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            VariationalFamily::Flow1D(_) => 1,
            VariationalFamily::FlowMV(f) => f.dim(),
            VariationalFamily::MeanField(g) => g.means.len(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            VariationalFamily::Flow1D(f) => f.params(),
            VariationalFamily::FlowMV(f) => f.params().to_vec(),
            VariationalFamily::MeanField(g) => [g.means.as_slice(), &g.log_sds].concat(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            VariationalFamily::Flow1D(f) => f.order() + 5,
            VariationalFamily::FlowMV(f) => f.n_params(),
            VariationalFamily::MeanField(g) => 2 * g.means.len(),
        }
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Data(format!(
                "family takes {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        match self {
            VariationalFamily::Flow1D(f) => *f = SandwichFlow::from_params(f.order(), params)?,
            VariationalFamily::FlowMV(f) => f.set_params(params)?,
            VariationalFamily::MeanField(g) => {
                let p = g.means.len();
                g.means.copy_from_slice(&params[..p]);
                g.log_sds.copy_from_slice(&params[p..]);
            }
        }
        Ok(())
    }

    /// Named parameter blocks.
    pub fn param_vector(&self) -> ParamVector {
        match self {
            VariationalFamily::Flow1D(f) => {
                let p = f.params();
                let m = f.order();
                let mut pv = ParamVector::new();
                pv.push_block("theta_raw", &p[..=m]);
                pv.push_block("a_raw", &p[m + 1..m + 2]);
                pv.push_block("b", &p[m + 2..m + 3]);
                pv.push_block("alpha_raw", &p[m + 3..m + 4]);
                pv.push_block("beta", &p[m + 4..]);
                pv
            }
            VariationalFamily::FlowMV(f) => f.param_vector(),
            VariationalFamily::MeanField(g) => {
                let mut pv = ParamVector::new();
                pv.push_block("means", &g.means);
                pv.push_block("log_sds", &g.log_sds);
                pv
            }
        }
    }

    fn bind<'a, S: Scalar>(&'a self, params: &'a [S]) -> Bound<'a, S> {
        match self {
            VariationalFamily::Flow1D(f) => Bound::Flow1D(SandwichView::new(f.basis(), params)),
            VariationalFamily::FlowMV(f) => Bound::FlowMV(f, params),
            VariationalFamily::MeanField(g) => {
                let p = g.means.len();
                let r = &params[p..];
                Bound::MeanField(&params[..p], r, S::sum(r))
            }
        }
    }

    /// `(θ, log q(θ))` at base point `z`.
    pub fn transform(&self, z: &[f64]) -> (Vec<f64>, f64) {
        let params = self.params();
        let (theta, log_det) = self.bind(&params).forward(z);
        (theta, base_ln_pdf(z) - log_det)
    }

    /// `(θ, log q(θ))` with parameters supplied as scalars.
    pub fn transform_with<S: Scalar>(&self, params: &[S], z: &[f64]) -> (Vec<S>, S) {
        let (theta, log_det) = self.bind(params).forward(z);
        (theta, -log_det + base_ln_pdf(z))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Bfvi,
    MeanField,
}

/// How to build the starting family for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FamilySpec {
    /// Sandwich flow for `p = 1`, masked flow otherwise.
    Bernstein { order: usize, hidden: Vec<usize> },
    MeanField,
}

impl FamilySpec {
    pub fn bernstein(order: usize) -> Self {
        FamilySpec::Bernstein {
            order,
            hidden: DEFAULT_HIDDEN.to_vec(),
        }
    }

    pub fn build(&self, p: usize, seed: u64) -> Result<VariationalFamily> {
        match self {
            FamilySpec::Bernstein { order, .. } if p == 1 => Ok(VariationalFamily::Flow1D(SandwichFlow::initial(*order)?)),
            FamilySpec::Bernstein { order, hidden } => Ok(VariationalFamily::FlowMV(MultivariateBernsteinFlow::initial(
                p, *order, hidden, seed,
            )?)),
            FamilySpec::MeanField => mean_field_gaussian_family(p),
        }
    }
}

fn base_ln_pdf(z: &[f64]) -> f64 {
    z.iter().map(|&v| std_normal_ln_pdf(v)).sum()
}

/// `S` standard-normal vectors of length `p`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseDraws {
    p: usize,
    data: Vec<f64>,
}

impl BaseDraws {
    pub fn len(&self) -> usize {
        self.data.len() / self.p.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.p..(s + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.p)
    }
}

pub fn draw_base<R: Rng + ?Sized>(p: usize, samples: usize, rng: &mut R) -> BaseDraws {
    let data = (0..p * samples).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    BaseDraws { p, data }
}

/// Monte-Carlo ELBO and its two parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboEstimate {
    pub elbo: f64,
    /// `(1/S) Σ log p(D | θ_s)`.
    pub expected_log_lik: f64,
    /// `(1/S) Σ [log q(θ_s) − log p(θ_s)]`.
    pub kl_term: f64,
}

/// Likelihood rows for one step and their rescaling factor.
#[derive(Debug, Clone, Copy)]
pub struct RowSelection<'a> {
    pub rows: Option<&'a [usize]>,
    pub scale: f64,
}

impl RowSelection<'_> {
    pub const ALL: RowSelection<'static> = RowSelection { rows: None, scale: 1.0 };
}

fn check_dims<M: ProbabilisticModel>(family: &VariationalFamily, model: &M) -> Result<()> {
    if family.dim() != model.dim() {
        return Err(Error::Config(format!(
            "family has dimension {} but model '{}' has {}",
            family.dim(),
            model.name(),
            model.dim()
        )));
    }
    Ok(())
}

/// Per-chunk sums: log-lik, (log q − log prior), gradient of the ELBO sum.
type ChunkSums = (f64, f64, Vec<f64>);

fn chunk_with_grad<M: ProbabilisticModel>(
    family: &VariationalFamily,
    params: &[f64],
    model: &M,
    z: &BaseDraws,
    range: std::ops::Range<usize>,
    sel: RowSelection<'_>,
) -> Result<ChunkSums> {
    if let VariationalFamily::FlowMV(flow) = family {
        return flow_chunk_with_grad(flow, model, z, range, sel);
    }
    let tape = Tape::new();
    let leaves = tape.vars(params);
    let bound = family.bind(&leaves);
    let (mut ll_sum, mut kl_sum) = (0.0, 0.0);
    let mut terms: Vec<Var<'_>> = Vec::with_capacity(range.len());
    for s in range {
        let zs = z.row(s);
        let (theta, log_det) = bound.forward(zs);
        let ll = model.log_likelihood_rows(&theta, sel.rows) * sel.scale;
        let lp = model.log_prior(&theta);
        let log_q = -log_det + base_ln_pdf(zs);
        let term = ll + lp - log_q;
        if !term.value().is_finite() {
            return Err(Error::NonFiniteTerm { sample: s });
        }
        ll_sum += ll.value();
        kl_sum += log_q.value() - lp.value();
        terms.push(term);
    }
    let total = Var::sum(&terms);
    let grads = tape.gradient(total)?;
    Ok((ll_sum, kl_sum, grads.wrt_all(&leaves)))
}

/// Masked-flow chunk: the flow is differentiated by its own reverse pass and
/// only the model terms go on a (small, per-sample) tape.
fn flow_chunk_with_grad<M: ProbabilisticModel>(
    flow: &MultivariateBernsteinFlow,
    model: &M,
    z: &BaseDraws,
    range: std::ops::Range<usize>,
    sel: RowSelection<'_>,
) -> Result<ChunkSums> {
    let mut scratch = FlowScratch::default();
    let mut grad = vec![0.0; flow.n_params()];
    let mut g_theta = Vec::with_capacity(flow.dim());
    let (mut ll_sum, mut kl_sum) = (0.0, 0.0);
    let mut tape = Tape::new();
    for s in range {
        let zs = z.row(s);
        let log_det = flow.forward_cached(zs, &mut scratch);
        tape.reset();
        let (ll, lp) = {
            let theta = tape.vars(&scratch.theta);
            let ll = model.log_likelihood_rows(&theta, sel.rows) * sel.scale;
            let lp = model.log_prior(&theta);
            let grads = tape.gradient(ll + lp)?;
            g_theta.clear();
            g_theta.extend(theta.iter().map(|&t| grads.wrt(t)));
            (ll.value(), lp.value())
        };
        let log_q = base_ln_pdf(zs) - log_det;
        if !(ll + lp - log_q).is_finite() {
            return Err(Error::NonFiniteTerm { sample: s });
        }
        ll_sum += ll;
        kl_sum += log_q - lp;
        flow.backward(&mut scratch, &g_theta, 1.0, &mut grad);
    }
    Ok((ll_sum, kl_sum, grad))
}

/// ELBO estimate at fixed draws and its gradient with respect to `λ`.
pub fn elbo_and_gradient<M: ProbabilisticModel>(
    family: &VariationalFamily,
    model: &M,
    z: &BaseDraws,
    sel: RowSelection<'_>,
) -> Result<(ElboEstimate, Vec<f64>)> {
    check_dims(family, model)?;
    let params = family.params();
    let n = z.len();
    let chunks: Vec<Result<ChunkSums>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| chunk_with_grad(family, &params, model, z, c * CHUNK..((c + 1) * CHUNK).min(n), sel))
        .collect();
    let mut grad = vec![0.0; params.len()];
    let (mut ll, mut kl) = (0.0, 0.0);
    for chunk in chunks {
        let (l, k, g) = chunk?;
        ll += l;
        kl += k;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let inv = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    let (ll, kl) = (ll * inv, kl * inv);
    Ok((
        ElboEstimate {
            elbo: ll - kl,
            expected_log_lik: ll,
            kl_term: kl,
        },
        grad,
    ))
}

/// ELBO at fixed draws, without gradients.
pub fn elbo_at<M: ProbabilisticModel>(family: &VariationalFamily, model: &M, z: &BaseDraws) -> Result<ElboEstimate> {
    check_dims(family, model)?;
    let params = family.params();
    let bound = family.bind(&params);
    let (mut ll, mut kl) = (0.0, 0.0);
    for (s, zs) in z.rows().enumerate() {
        let (theta, log_det) = bound.forward(zs);
        let l = model.log_likelihood(&theta);
        let k = base_ln_pdf(zs) - log_det - model.log_prior(&theta);
        if !(l - k).is_finite() {
            return Err(Error::NonFiniteTerm { sample: s });
        }
        ll += l;
        kl += k;
    }
    let inv = 1.0 / z.len() as f64;
    Ok(ElboEstimate {
        elbo: (ll - kl) * inv,
        expected_log_lik: ll * inv,
        kl_term: kl * inv,
    })
}

/// Fresh-draw ELBO estimate with `samples` draws.
pub fn estimate_elbo<M: ProbabilisticModel, R: Rng + ?Sized>(
    family: &VariationalFamily,
    model: &M,
    samples: usize,
    rng: &mut R,
) -> Result<ElboEstimate> {
    let z = draw_base(family.dim(), samples, rng);
    elbo_at(family, model, &z)
}

/// Checks [`elbo_and_gradient`] against central differences of the same
/// fixed-draw objective.
///
/// Differences are taken per sample and per likelihood row before summing,
/// which is the same estimate as differencing the total but keeps the
/// cancellation error at the size of one term rather than of the whole sum.
pub fn elbo_gradient_check<M: ProbabilisticModel>(
    family: &VariationalFamily,
    model: &M,
    z: &BaseDraws,
    sel: RowSelection<'_>,
) -> Result<GradCheck> {
    let (_, analytic) = elbo_and_gradient(family, model, z, sel)?;
    let params = family.params();
    let rows: Vec<usize> = match sel.rows {
        Some(r) => r.to_vec(),
        None => (0..model.n_rows()).collect(),
    };
    let (mut up, mut down) = (family.clone(), family.clone());
    let mut probe = params.clone();
    let mut numeric = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        probe[i] = params[i] + FD_STEP;
        up.set_params(&probe)?;
        probe[i] = params[i] - FD_STEP;
        down.set_params(&probe)?;
        probe[i] = params[i];
        let mut total = 0.0;
        for zs in z.rows() {
            let (tu, lq_u) = up.transform(zs);
            let (td, lq_d) = down.transform(zs);
            let mut diff = (model.log_prior(&tu) - model.log_prior(&td)) - (lq_u - lq_d);
            for &r in &rows {
                let row = std::slice::from_ref(&r);
                diff += sel.scale * (model.log_likelihood_rows(&tu, Some(row)) - model.log_likelihood_rows(&td, Some(row)));
            }
            total += diff;
        }
        numeric.push(total / (2.0 * FD_STEP * z.len() as f64));
    }
    Ok(compare_gradients(&analytic, &numeric, FD_REL_TOL, FD_ABS_TOL, FD_SMALL_GRAD))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Monte-Carlo samples per step.
    pub samples: usize,
    pub epochs: usize,
    pub lr: f64,
    pub rms_decay: f64,
    pub rms_eps: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Likelihood rows per step; `None` uses all rows.
    pub batch: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            samples: 10,
            epochs: 1000,
            lr: 1e-3,
            rms_decay: 0.9,
            rms_eps: 1e-7,
            clip_norm: Some(100.0),
            batch: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.samples == 0 {
            return bad("samples per step must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.rms_decay) || !(self.rms_eps > 0.0) {
            return bad("RMSprop decay must lie in [0, 1) and epsilon be positive");
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return bad("clip norm must be positive");
        }
        if self.batch == Some(0) {
            return bad("batch size must be at least 1");
        }
        Ok(())
    }
}

/// Outcome of [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub family: VariationalFamily,
    /// ELBO estimate of every step, taken before its update.
    pub elbo_trace: Vec<f64>,
    /// Steps whose gradient was clipped.
    pub clipped_steps: Vec<usize>,
    pub seed: u64,
    pub wall_time_s: f64,
}

/// Training stopped at `step`; `partial` holds the last finite parameters.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("training diverged at step {step}: {source}")]
pub struct TrainError {
    pub step: usize,
    pub source: Error,
    pub partial: Box<FitResult>,
}

/// RMSprop state.
#[derive(Debug, Clone)]
struct RmsProp {
    acc: Vec<f64>,
    lr: f64,
    decay: f64,
    eps: f64,
}

impl RmsProp {
    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        for ((p, a), &g) in params.iter_mut().zip(&mut self.acc).zip(grad) {
            *a = self.decay * *a + (1.0 - self.decay) * g * g;
            *p -= self.lr * g / (*a + self.eps).sqrt();
        }
    }
}

/// Maximizes the ELBO from the family built by `spec`.
pub fn train<M: ProbabilisticModel>(model: &M, spec: &FamilySpec, config: &TrainConfig) -> std::result::Result<FitResult, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init_seed: u64 = rng.random();
    let fail = |step, source, family: VariationalFamily| TrainError {
        step,
        source,
        partial: Box::new(FitResult {
            family,
            elbo_trace: Vec::new(),
            clipped_steps: Vec::new(),
            seed: config.seed,
            wall_time_s: 0.0,
        }),
    };
    let family = match config.validate().and_then(|_| spec.build(model.dim(), init_seed)) {
        Ok(f) => f,
        Err(e) => {
            let placeholder = VariationalFamily::MeanField(MeanFieldGaussian::new(model.dim()));
            return Err(fail(0, e, placeholder));
        }
    };
    train_from(model, family, config, rng)
}

/// Continues training an existing family with the RNG stream of `config.seed`.
pub fn train_family<M: ProbabilisticModel>(
    model: &M,
    family: VariationalFamily,
    config: &TrainConfig,
) -> std::result::Result<FitResult, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let _: u64 = rng.random();
    train_from(model, family, config, rng)
}

fn train_from<M: ProbabilisticModel>(
    model: &M,
    mut family: VariationalFamily,
    config: &TrainConfig,
    mut rng: ChaCha8Rng,
) -> std::result::Result<FitResult, TrainError> {
    let started = Instant::now();
    let mut result = FitResult {
        family: family.clone(),
        elbo_trace: Vec::with_capacity(config.epochs),
        clipped_steps: Vec::new(),
        seed: config.seed,
        wall_time_s: 0.0,
    };
    let abort = |step: usize, source: Error, mut result: FitResult, family: &VariationalFamily| TrainError {
        step,
        source,
        partial: Box::new({
            result.family = family.clone();
            result.wall_time_s = started.elapsed().as_secs_f64();
            result
        }),
    };
    if let Err(e) = config.validate().and_then(|_| check_dims(&family, model)) {
        return Err(abort(0, e, result, &family));
    }
    let mut params = family.params();
    let mut opt = RmsProp {
        acc: vec![0.0; params.len()],
        lr: config.lr,
        decay: config.rms_decay,
        eps: config.rms_eps,
    };
    let n_rows = model.n_rows();
    let batch = config.batch.filter(|&b| b < n_rows);
    for step in 0..config.epochs {
        let z = draw_base(family.dim(), config.samples, &mut rng);
        let rows = batch.map(|b| rand::seq::index::sample(&mut rng, n_rows, b).into_vec());
        let sel = match &rows {
            Some(r) => RowSelection {
                rows: Some(r),
                scale: n_rows as f64 / r.len() as f64,
            },
            None => RowSelection::ALL,
        };
        let (estimate, mut grad) = match elbo_and_gradient(&family, model, &z, sel) {
            Ok(v) => v,
            Err(e) => return Err(abort(step, e, result, &family)),
        };
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(abort(step, Error::Domain("non-finite gradient".into()), result, &family));
        }
        result.elbo_trace.push(estimate.elbo);
        // Descend on the negative ELBO.
        grad.iter_mut().for_each(|g| *g = -*g);
        if let Some(cap) = config.clip_norm {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > cap {
                grad.iter_mut().for_each(|g| *g *= cap / norm);
                result.clipped_steps.push(step);
            }
        }
        opt.step(&mut params, &grad);
        if let Err(e) = family.set_params(&params) {
            return Err(abort(step, e, result, &family));
        }
    }
    result.family = family;
    result.wall_time_s = started.elapsed().as_secs_f64();
    Ok(result)
}

/// Posterior draws with their base points and log densities.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBank {
    pub z: BaseDraws,
    /// Row-major `n × p`, unconstrained.
    pub theta: Vec<f64>,
    pub log_q: Vec<f64>,
}

impl SampleBank {
    pub fn len(&self) -> usize {
        self.log_q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_q.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.z.dim()
    }

    pub fn theta(&self, s: usize) -> &[f64] {
        let p = self.dim();
        &self.theta[s * p..(s + 1) * p]
    }

    /// Column `j` across all draws.
    pub fn marginal(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|s| self.theta(s)[j]).collect()
    }
}

pub fn sample_posterior<R: Rng + ?Sized>(family: &VariationalFamily, n: usize, rng: &mut R) -> SampleBank {
    let z = draw_base(family.dim(), n, rng);
    let params = family.params();
    let bound = family.bind(&params);
    let mut theta = Vec::with_capacity(n * family.dim());
    let mut log_q = Vec::with_capacity(n);
    for zs in z.rows() {
        let (t, log_det) = bound.forward(zs);
        theta.extend_from_slice(&t);
        log_q.push(base_ln_pdf(zs) - log_det);
    }
    SampleBank { z, theta, log_q }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::BernoulliBeta;

    #[test]
    fn mean_field_mode_density() {
        let g = MeanFieldGaussian {
            means: vec![0.3, -1.0],
            log_sds: vec![0.5, -0.2],
        };
        let family = VariationalFamily::MeanField(g);
        let (theta, log_q) = family.transform(&[0.0, 0.0]);
        assert_eq!(theta, vec![0.3, -1.0]);
        let expected = 2.0 * std_normal_ln_pdf(0.0) - 0.3;
        assert!((log_q - expected).abs() < 1e-14);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let model = BernoulliBeta::new(&[1.0, 1.0]).unwrap();
        let config = TrainConfig {
            samples: 20,
            epochs: 5,
            lr: 0.0,
            seed: 4,
            ..TrainConfig::default()
        };
        let fit = train(&model, &FamilySpec::bernstein(5), &config).unwrap();
        let start = FamilySpec::bernstein(5).build(1, 0).unwrap();
        assert_eq!(fit.family.params(), start.params());
        assert_eq!(fit.elbo_trace.len(), 5);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let model = BernoulliBeta::new(&[1.0]).unwrap();
        let config = TrainConfig {
            samples: 0,
            ..TrainConfig::default()
        };
        let err = train(&model, &FamilySpec::MeanField, &config).unwrap_err();
        assert!(matches!(err.source, Error::Config(_)));
    }

    #[test]
    fn sample_bank_log_q_matches_transform() {
        let family = FamilySpec::bernstein(4).build(3, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bank = sample_posterior(&family, 10, &mut rng);
        for s in 0..10 {
            let (theta, log_q) = family.transform(bank.z.row(s));
            assert_eq!(theta, bank.theta(s));
            assert_eq!(log_q.to_bits(), bank.log_q[s].to_bits());
        }
    }
}
