//! Multivariate triangular Bernstein flow.
//!
//! Dimension 1 has its own directly optimized raw coefficients. A masked
//! autoregressive network (tanh hidden layers, linear output) maps
//! `z₁ … z_{j−1}` to the raw coefficients of dimension `j`. Each `z_j` is
//! squashed by a clamped sigmoid before entering the Bernstein polynomial,
//! so the Jacobian is lower triangular with diagonal
//! `σ'(z_j) · f_j'(σ(z_j))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{sigmoid, softplus_inv, ParamVector, Scalar};
use crate::bernstein::{
    monotone_bernstein_from_raw, monotone_kernel, std_normal_ln_pdf, BernsteinBasis, KernelScratch, SIGMOID_CLAMP,
};
use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: [usize; 2] = [10, 10];

/// Connectivity of one dense layer: `active[unit]` lists the inputs it reads.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMask {
    pub n_in: usize,
    pub n_out: usize,
    pub active: Vec<Vec<u32>>,
    /// Row-major `n_out × n_in` matrix of 0/1 flags, same content as `active`.
    pub dense: Vec<f64>,
}

impl LayerMask {
    pub fn allows(&self, unit: usize, input: usize) -> bool {
        self.active[unit].binary_search(&(input as u32)).is_ok()
    }

    fn from_rule(n_in: usize, n_out: usize, allow: impl Fn(usize, usize) -> bool) -> Self {
        let active: Vec<Vec<u32>> = (0..n_out)
            .map(|o| (0..n_in).filter(|&i| allow(o, i)).map(|i| i as u32).collect())
            .collect();
        let mut dense = vec![0.0; n_in * n_out];
        for (o, row) in active.iter().enumerate() {
            row.iter().for_each(|&i| dense[o * n_in + i as usize] = 1.0);
        }
        LayerMask {
            n_in,
            n_out,
            active,
            dense,
        }
    }
}

/// Masks for input → hidden₁ → … → hiddenₖ → output.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub layers: Vec<LayerMask>,
    /// MADE degree of every hidden unit, per hidden layer.
    pub degrees: Vec<Vec<usize>>,
}

impl MaskSet {
    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

/// MADE masks with hidden degrees cycling through `1..=p−1`.
///
/// Inputs are 1-based dimensions; output block `j` (for `j = 2..=p`) holds
/// `out_per_dim` units and may only see hidden units of degree `≤ j − 1`.
pub fn build_masks(p: usize, hidden: &[usize], out_per_dim: usize) -> MaskSet {
    if p <= 1 {
        return MaskSet {
            layers: Vec::new(),
            degrees: Vec::new(),
        };
    }
    let degrees: Vec<Vec<usize>> = hidden
        .iter()
        .map(|&h| (0..h).map(|k| k % (p - 1) + 1).collect())
        .collect();
    let mut layers = Vec::with_capacity(hidden.len() + 1);
    // input index i (0-based) is dimension i + 1
    layers.push(LayerMask::from_rule(p, hidden[0], |o, i| degrees[0][o] >= i + 1));
    for l in 1..hidden.len() {
        let (prev, cur) = (&degrees[l - 1], &degrees[l]);
        layers.push(LayerMask::from_rule(hidden[l - 1], hidden[l], |o, i| cur[o] >= prev[i]));
    }
    let last = degrees.last().unwrap();
    let n_out = (p - 1) * out_per_dim;
    layers.push(LayerMask::from_rule(*hidden.last().unwrap(), n_out, |o, i| {
        let block = o / out_per_dim + 2;
        last[i] < block
    }));
    MaskSet { layers, degrees }
}

/// Offsets of one layer's weights and biases in the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerSlots {
    weights: usize,
    bias: usize,
}

/// Masked dense network parameterizing dimensions `2..=p`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedNetwork {
    pub dim_in: usize,
    pub hidden_sizes: Vec<usize>,
    pub out_per_dim: usize,
    pub masks: MaskSet,
    slots: Vec<LayerSlots>,
}

impl MaskedNetwork {
    fn new(dim_in: usize, hidden: &[usize], out_per_dim: usize, offset: usize) -> Self {
        let masks = build_masks(dim_in, hidden, out_per_dim);
        let mut slots = Vec::new();
        let mut at = offset;
        for layer in &masks.layers {
            let weights = at;
            at += layer.n_in * layer.n_out;
            slots.push(LayerSlots { weights, bias: at });
            at += layer.n_out;
        }
        MaskedNetwork {
            dim_in,
            hidden_sizes: hidden.to_vec(),
            out_per_dim,
            masks,
            slots,
        }
    }

    pub fn n_params(&self) -> usize {
        self.masks
            .layers
            .iter()
            .map(|l| l.n_in * l.n_out + l.n_out)
            .sum()
    }

    /// Output units given base point `z`; empty for `p = 1`.
    pub fn outputs<S: Scalar>(&self, params: &[S], z: &[f64]) -> Vec<S> {
        let layers = &self.masks.layers;
        if layers.is_empty() {
            return Vec::new();
        }
        let n = layers.len();
        let mut act: Vec<S> = Vec::new();
        for (l, (layer, slot)) in layers.iter().zip(&self.slots).enumerate() {
            let out: Vec<S> = (0..layer.n_out)
                .map(|o| {
                    let w = &params[slot.weights + o * layer.n_in..slot.weights + (o + 1) * layer.n_in];
                    let bias = params[slot.bias + o];
                    let pre = if l == 0 {
                        S::affine_const(bias, w, z, &layer.active[o])
                    } else {
                        S::affine(bias, w, &act, &layer.active[o])
                    };
                    if l + 1 < n {
                        pre.tanh()
                    } else {
                        pre
                    }
                })
                .collect();
            act = out;
        }
        act
    }
}

/// Triangular `p`-dimensional Bernstein flow with flat parameters
/// `λ = (ϑ¹_raw, network weights)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateBernsteinFlow {
    p: usize,
    order: usize,
    basis: BernsteinBasis,
    net: MaskedNetwork,
    params: Vec<f64>,
}

fn ramp(order: usize) -> Vec<f64> {
    let mut raw = vec![softplus_inv(6.0 / order as f64); order + 1];
    raw[0] = -3.0;
    raw
}

impl MultivariateBernsteinFlow {
    /// Zero network with every dimension's coefficients spanning `[−3, 3]`.
    pub fn zeroed(p: usize, order: usize, hidden: &[usize]) -> Result<Self> {
        if p == 0 {
            return Err(Error::Domain("flow dimension must be at least 1".into()));
        }
        if order == 0 {
            return Err(Error::Domain("a Bernstein flow needs order M ≥ 1".into()));
        }
        if p > 1 && (hidden.is_empty() || hidden.contains(&0)) {
            return Err(Error::Config("hidden layers must be non-empty".into()));
        }
        let basis = BernsteinBasis::new(order)?;
        let net = MaskedNetwork::new(p, hidden, order + 1, order + 1);
        let mut params = vec![0.0; order + 1 + net.n_params()];
        params[..=order].copy_from_slice(&ramp(order));
        let mut flow = MultivariateBernsteinFlow {
            p,
            order,
            basis,
            net,
            params,
        };
        if let Some(slot) = flow.net.slots.last().copied() {
            let r = ramp(order);
            for j in 0..p - 1 {
                let at = slot.bias + j * (order + 1);
                flow.params[at..at + order + 1].copy_from_slice(&r);
            }
        }
        Ok(flow)
    }

    /// Training start: ramp coefficients, zero output weights, hidden
    /// weights uniform on `±√(3 / fan_in)` over unmasked connections.
    pub fn initial(p: usize, order: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut flow = Self::zeroed(p, order, hidden)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_layers = flow.net.masks.layers.len();
        for l in 0..n_layers.saturating_sub(1) {
            let layer = flow.net.masks.layers[l].clone();
            let slot = flow.net.slots[l];
            for (o, active) in layer.active.iter().enumerate() {
                if active.is_empty() {
                    continue;
                }
                let limit = (3.0 / active.len() as f64).sqrt();
                for &i in active {
                    flow.params[slot.weights + o * layer.n_in + i as usize] = rng.random_range(-limit..limit);
                }
            }
        }
        Ok(flow)
    }

    pub fn from_params(p: usize, order: usize, hidden: &[usize], params: &[f64]) -> Result<Self> {
        let mut flow = Self::zeroed(p, order, hidden)?;
        flow.set_params(params)?;
        Ok(flow)
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn basis(&self) -> &BernsteinBasis {
        &self.basis
    }

    pub fn network(&self) -> &MaskedNetwork {
        &self.net
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Data(format!(
                "flow takes {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite flow parameter".into()));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Named blocks: `theta1_raw`, then `w{l}` / `b{l}` per layer.
    pub fn param_vector(&self) -> ParamVector {
        let mut pv = ParamVector::new();
        pv.push_block("theta1_raw", &self.params[..=self.order]);
        for (l, (layer, slot)) in self.net.masks.layers.iter().zip(&self.net.slots).enumerate() {
            let nw = layer.n_in * layer.n_out;
            pv.push_block(format!("w{}", l + 1), &self.params[slot.weights..slot.weights + nw]);
            pv.push_block(format!("b{}", l + 1), &self.params[slot.bias..slot.bias + layer.n_out]);
        }
        pv
    }

    /// Raw coefficient rows `p × (M + 1)` for base point `z`.
    pub fn emit_coefficients(&self, z: &[f64]) -> Vec<Vec<f64>> {
        self.rows(&self.params, z)
    }

    fn rows<S: Scalar>(&self, params: &[S], z: &[f64]) -> Vec<Vec<S>> {
        let k = self.order + 1;
        let mut rows = vec![params[..k].to_vec()];
        let out = self.net.outputs(params, z);
        rows.extend(out.chunks(k).map(|c| c.to_vec()));
        rows
    }

    /// `(θ, log_det)` with parameters supplied as scalars of any kind.
    pub fn forward_with<S: Scalar>(&self, params: &[S], z: &[f64]) -> (Vec<S>, S) {
        assert_eq!(z.len(), self.p, "base point dimension");
        let rows = self.rows(params, z);
        let mut theta = Vec::with_capacity(self.p);
        let mut slopes = Vec::with_capacity(self.p);
        let mut squash_terms = 0.0;
        for (row, &zj) in rows.iter().zip(z) {
            let v = sigmoid(zj).clamp(SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP);
            squash_terms += (v * (1.0 - v)).ln();
            let (f, fp) = monotone_bernstein_from_raw(&self.basis, row, v);
            theta.push(f);
            slopes.push(fp.ln());
        }
        let log_det = S::sum(&slopes) + squash_terms;
        (theta, log_det)
    }

    pub fn forward(&self, z: &[f64]) -> (Vec<f64>, f64) {
        self.forward_with(&self.params, z)
    }

    /// Plain-float forward pass that keeps what [`backward`](Self::backward)
    /// needs. Writes `θ` into `scratch.theta` and returns `log_det`.
    pub fn forward_cached(&self, z: &[f64], scratch: &mut FlowScratch) -> f64 {
        assert_eq!(z.len(), self.p, "base point dimension");
        let k = self.order + 1;
        let layers = &self.net.masks.layers;
        scratch.acts.resize_with(layers.len() + 1, Vec::new);
        scratch.acts[0].clear();
        scratch.acts[0].extend_from_slice(z);
        for (l, (layer, slot)) in layers.iter().zip(&self.net.slots).enumerate() {
            let (done, rest) = scratch.acts.split_at_mut(l + 1);
            let (input, out) = (&done[l], &mut rest[0]);
            out.clear();
            let hidden = l + 1 < layers.len();
            let ni = layer.n_in;
            let weights = &self.params[slot.weights..slot.weights + ni * layer.n_out];
            let biases = &self.params[slot.bias..slot.bias + layer.n_out];
            out.extend(
                weights
                    .chunks_exact(ni)
                    .zip(layer.dense.chunks_exact(ni))
                    .zip(biases)
                    .map(|((w, m), &b)| {
                        let pre = b + masked_dot(w, m, input);
                        if hidden {
                            pre.tanh()
                        } else {
                            pre
                        }
                    }),
            );
        }
        scratch.df.resize(self.p * k, 0.0);
        scratch.dfp.resize(self.p * k, 0.0);
        scratch.theta.clear();
        scratch.slope.clear();
        let mut log_det = 0.0;
        for (j, &zj) in z.iter().enumerate() {
            let raw = if j == 0 {
                &self.params[..k]
            } else {
                &scratch.acts[layers.len()][(j - 1) * k..j * k]
            };
            let v = sigmoid(zj).clamp(SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP);
            let (f, fp) = monotone_kernel(
                &self.basis,
                raw,
                v,
                &mut scratch.kernel,
                &mut scratch.df[j * k..(j + 1) * k],
                &mut scratch.dfp[j * k..(j + 1) * k],
            );
            scratch.theta.push(f);
            scratch.slope.push(fp);
            log_det += fp.ln() + (v * (1.0 - v)).ln();
        }
        log_det
    }

    /// Adds `Σⱼ g_θⱼ ∂θⱼ/∂λ + g_det ∂log_det/∂λ` to `grad`, using the
    /// intermediates of the last [`forward_cached`](Self::forward_cached).
    pub fn backward(&self, scratch: &mut FlowScratch, g_theta: &[f64], g_det: f64, grad: &mut [f64]) {
        let k = self.order + 1;
        let layers = &self.net.masks.layers;
        let n = layers.len();
        scratch.adj.resize_with(n + 1, Vec::new);
        for (j, &gt) in g_theta.iter().enumerate() {
            let scale = g_det / scratch.slope[j];
            let raw_adj = (j * k..(j + 1) * k).map(|i| gt * scratch.df[i] + scale * scratch.dfp[i]);
            if j == 0 {
                grad[..k].iter_mut().zip(raw_adj).for_each(|(g, a)| *g += a);
            } else {
                if j == 1 {
                    scratch.adj[n].clear();
                }
                scratch.adj[n].extend(raw_adj);
            }
        }
        for l in (0..n).rev() {
            let (layer, slot) = (&layers[l], self.net.slots[l]);
            let (lower, upper) = scratch.adj.split_at_mut(l + 1);
            let delta = &mut upper[0];
            if l + 1 < n {
                // through tanh: d tanh = 1 − tanh²
                delta
                    .iter_mut()
                    .zip(&scratch.acts[l + 1])
                    .for_each(|(d, t)| *d *= 1.0 - t * t);
            }
            let input = &scratch.acts[l];
            let adj_in = &mut lower[l];
            let ni = layer.n_in;
            if l > 0 {
                adj_in.clear();
                adj_in.resize(ni, 0.0);
            }
            let weights = &self.params[slot.weights..slot.weights + ni * layer.n_out];
            let (g_w, g_b) = grad[slot.weights..slot.bias + layer.n_out].split_at_mut(ni * layer.n_out);
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g_b[o] += d;
                let mask = &layer.dense[o * ni..(o + 1) * ni];
                let g_row = &mut g_w[o * ni..(o + 1) * ni];
                for ((g, &x), &m) in g_row.iter_mut().zip(input).zip(mask) {
                    *g += d * x * m;
                }
                if l > 0 {
                    let w_row = &weights[o * ni..(o + 1) * ni];
                    for ((a, &w), &m) in adj_in.iter_mut().zip(w_row).zip(mask) {
                        *a += d * w * m;
                    }
                }
            }
        }
    }

    /// `Σⱼ log N(zⱼ) − log_det`.
    pub fn log_q(&self, z: &[f64]) -> f64 {
        let (_, log_det) = self.forward(z);
        z.iter().map(|&zj| std_normal_ln_pdf(zj)).sum::<f64>() - log_det
    }
}

/// `Σᵢ wᵢ mᵢ xᵢ` with four independent accumulators.
fn masked_dot(w: &[f64], m: &[f64], x: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (wc, mc, xc) = (w.chunks_exact(4), m.chunks_exact(4), x.chunks_exact(4));
    let tail: f64 = wc
        .remainder()
        .iter()
        .zip(mc.remainder())
        .zip(xc.remainder())
        .map(|((w, m), x)| w * m * x)
        .sum();
    for ((w, m), x) in wc.zip(mc).zip(xc) {
        for k in 0..4 {
            acc[k] += w[k] * m[k] * x[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Intermediates of one [`MultivariateBernsteinFlow::forward_cached`] call,
/// reused across samples to avoid reallocating.
#[derive(Debug, Clone, Default)]
pub struct FlowScratch {
    /// `θ` of the last forward pass.
    pub theta: Vec<f64>,
    // per layer: input base point, then each layer's output
    acts: Vec<Vec<f64>>,
    adj: Vec<Vec<f64>>,
    df: Vec<f64>,
    dfp: Vec<f64>,
    slope: Vec<f64>,
    kernel: KernelScratch,
}

pub fn emit_coefficients(flow: &MultivariateBernsteinFlow, z: &[f64]) -> Vec<Vec<f64>> {
    flow.emit_coefficients(z)
}

pub fn mv_forward(flow: &MultivariateBernsteinFlow, z: &[f64]) -> (Vec<f64>, f64) {
    flow.forward(z)
}

pub fn mv_log_q(flow: &MultivariateBernsteinFlow, z: &[f64]) -> f64 {
    flow.log_q(z)
}
