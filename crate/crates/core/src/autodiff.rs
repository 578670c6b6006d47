//! Scalar reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation as a node holding its value, the
//! indices of its parents and the local partial derivative with respect to
//! each parent. [`Var`] is a cheap `Copy` handle to a node. Calling
//! [`Tape::gradient`] sweeps the nodes in reverse order and accumulates
//! adjoints.
//!
//! Besides the elementary operations the tape supports *composite* nodes:
//! a node with an arbitrary number of parents whose partials are supplied
//! by the caller. The Bernstein polynomial, affine layer and likelihood
//! kernels use these, so a whole polynomial evaluation costs one node.
//!
//! Numerical code is written once against the [`Scalar`] trait and runs
//! either on plain `f64` (no recording) or on [`Var`] (recording).
//!
//! ```
//! use bfvi::autodiff::{Scalar, Tape};
//!
//! let tape = Tape::new();
//! let x = tape.var(1.0);
//! let y = x * x.exp();
//! let grads = tape.gradient(y).unwrap();
//! assert!((grads.wrt(x) - 2.0 * std::f64::consts::E).abs() < 1e-12);
//! ```

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Range, Sub};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Ln,
    PowI,
    Sigmoid,
    Softplus,
    Tanh,
    Composite,
}

#[derive(Default)]
struct Nodes {
    kinds: Vec<OpKind>,
    values: Vec<f64>,
    // CSR layout: parents of node i live in parents[offsets[i]..offsets[i + 1]].
    offsets: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
    log_domain_error: Option<usize>,
}

impl Nodes {
    fn push(&mut self, kind: OpKind, value: f64) -> u32 {
        let index = self.values.len() as u32;
        self.kinds.push(kind);
        self.values.push(value);
        index
    }
}

/// Append-only record of a computation.
pub struct Tape {
    nodes: RefCell<Nodes>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("len", &self.len()).finish()
    }
}

// Dropped tapes hand their buffers back here so the next tape on the same
// thread starts with warm allocations.
thread_local! {
    static SPARE: RefCell<Vec<Nodes>> = const { RefCell::new(Vec::new()) };
}
const SPARE_LIMIT: usize = 4;

impl Nodes {
    fn clear(&mut self) {
        self.kinds.clear();
        self.values.clear();
        self.offsets.clear();
        self.offsets.push(0);
        self.parents.clear();
        self.partials.clear();
        self.log_domain_error = None;
    }
}

impl Drop for Tape {
    fn drop(&mut self) {
        let nodes = std::mem::take(self.nodes.get_mut());
        let _ = SPARE.try_with(|spare| {
            let mut spare = spare.borrow_mut();
            if spare.len() < SPARE_LIMIT {
                spare.push(nodes);
            }
        });
    }
}

impl Tape {
    pub fn new() -> Self {
        let mut nodes = SPARE
            .try_with(|spare| spare.borrow_mut().pop())
            .ok()
            .flatten()
            .unwrap_or_default();
        nodes.clear();
        Tape {
            nodes: RefCell::new(nodes),
        }
    }

    /// Clears all nodes while keeping the allocations.
    pub fn reset(&mut self) {
        self.nodes.get_mut().clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Creates an independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let index = self.nodes.borrow_mut().push(OpKind::Leaf, value);
        self.finish(index, value)
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    /// Constants are leaves nobody asks the gradient of.
    pub fn constant(&self, value: f64) -> Var<'_> {
        self.var(value)
    }

    pub fn kind(&self, var: Var<'_>) -> OpKind {
        self.nodes.borrow().kinds[var.index as usize]
    }

    /// Parent indices of a node, for inspection.
    pub fn parents(&self, var: Var<'_>) -> Vec<usize> {
        let nodes = self.nodes.borrow();
        let i = var.index as usize;
        let range = nodes.offsets[i] as usize..nodes.offsets[i + 1] as usize;
        nodes.parents[range].iter().map(|&p| p as usize).collect()
    }

    fn finish(&self, index: u32, value: f64) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let end = nodes.parents.len() as u32;
        nodes.offsets.push(end);
        Var {
            tape: self,
            index,
            value,
        }
    }

    fn unary(&self, kind: OpKind, value: f64, parent: u32, partial: f64) -> Var<'_> {
        let index = {
            let mut nodes = self.nodes.borrow_mut();
            let index = nodes.push(kind, value);
            nodes.parents.push(parent);
            nodes.partials.push(partial);
            index
        };
        self.finish(index, value)
    }

    fn binary(&self, kind: OpKind, value: f64, lhs: (u32, f64), rhs: (u32, f64)) -> Var<'_> {
        let index = {
            let mut nodes = self.nodes.borrow_mut();
            let index = nodes.push(kind, value);
            nodes.parents.extend_from_slice(&[lhs.0, rhs.0]);
            nodes.partials.extend_from_slice(&[lhs.1, rhs.1]);
            index
        };
        self.finish(index, value)
    }

    /// Records a node with caller-supplied local partials.
    pub fn composite<'t>(&'t self, value: f64, parents: &[Var<'t>], partials: &[f64]) -> Var<'t> {
        assert_eq!(parents.len(), partials.len(), "one partial per parent");
        let index = {
            let mut nodes = self.nodes.borrow_mut();
            let index = nodes.push(OpKind::Composite, value);
            nodes.parents.extend(parents.iter().map(|p| p.index));
            nodes.partials.extend_from_slice(partials);
            index
        };
        self.finish(index, value)
    }

    /// Adjoints of `output` with respect to every node recorded before it.
    pub fn gradient(&self, output: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if let Some(node) = nodes.log_domain_error {
            return Err(Error::LogDomain { node });
        }
        let n = output.index as usize + 1;
        let mut adjoints = vec![0.0; n];
        adjoints[n - 1] = 1.0;
        for i in (0..n).rev() {
            let adj = adjoints[i];
            if adj == 0.0 {
                continue;
            }
            let (lo, hi) = (nodes.offsets[i] as usize, nodes.offsets[i + 1] as usize);
            for (&p, &d) in nodes.parents[lo..hi].iter().zip(&nodes.partials[lo..hi]) {
                adjoints[p as usize] += adj * d;
            }
        }
        Ok(Gradients { adjoints })
    }
}

/// Result of a backward sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, var: Var<'_>) -> f64 {
        self.adjoints.get(var.index as usize).copied().unwrap_or(0.0)
    }

    pub fn wrt_all(&self, vars: &[Var<'_>]) -> Vec<f64> {
        vars.iter().map(|&v| self.wrt(v)).collect()
    }
}

/// Handle to a recorded value.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: u32,
    value: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var(#{} = {})", self.index, self.value)
    }
}

impl<'t> Var<'t> {
    pub fn index(&self) -> usize {
        self.index as usize
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }
}

/// Arithmetic shared by `f64` and [`Var`].
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Whether operations are recorded; composite kernels skip partials when false.
    const TRACED: bool;

    fn value(self) -> f64;
    /// A constant living in the same context as `self`.
    fn lift(self, c: f64) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn sigmoid(self) -> Self;
    fn softplus(self) -> Self;
    fn tanh(self) -> Self;

    /// `parents` must be non-empty when traced.
    fn compose(value: f64, parents: &[Self], partials: &[f64]) -> Self;

    /// `bias + Σ_{k ∈ active} weights[k] · inputs[k]`.
    fn affine(bias: Self, weights: &[Self], inputs: &[Self], active: &[u32]) -> Self;

    /// `bias + Σ_{k ∈ active} weights[k] · inputs[k]` with constant inputs.
    fn affine_const(bias: Self, weights: &[Self], inputs: &[f64], active: &[u32]) -> Self;

    fn log_sigmoid(self) -> Self {
        -(-self).softplus()
    }

    fn square(self) -> Self {
        self * self
    }

    fn sum(xs: &[Self]) -> Self {
        let value = xs.iter().map(|x| x.value()).sum();
        if Self::TRACED {
            Self::compose(value, xs, &vec![1.0; xs.len()])
        } else {
            Self::compose(value, xs, &[])
        }
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        assert_eq!(a.len(), b.len());
        let value = a.iter().zip(b).map(|(x, y)| x.value() * y.value()).sum();
        if Self::TRACED {
            let parents: Vec<Self> = a.iter().chain(b).copied().collect();
            let partials: Vec<f64> = b.iter().chain(a).map(|x| x.value()).collect();
            Self::compose(value, &parents, &partials)
        } else {
            Self::compose(value, &[], &[])
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

impl Scalar for f64 {
    const TRACED: bool = false;

    fn value(self) -> f64 {
        self
    }
    fn lift(self, c: f64) -> f64 {
        c
    }
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    fn ln(self) -> f64 {
        f64::ln(self)
    }
    fn powi(self, n: i32) -> f64 {
        f64::powi(self, n)
    }
    fn sigmoid(self) -> f64 {
        sigmoid(self)
    }
    fn softplus(self) -> f64 {
        softplus(self)
    }
    fn tanh(self) -> f64 {
        f64::tanh(self)
    }
    fn compose(value: f64, _parents: &[f64], _partials: &[f64]) -> f64 {
        value
    }
    fn affine(bias: f64, weights: &[f64], inputs: &[f64], active: &[u32]) -> f64 {
        active
            .iter()
            .fold(bias, |acc, &k| acc + weights[k as usize] * inputs[k as usize])
    }
    fn affine_const(bias: f64, weights: &[f64], inputs: &[f64], active: &[u32]) -> f64 {
        Self::affine(bias, weights, inputs, active)
    }
}

impl<'t> Scalar for Var<'t> {
    const TRACED: bool = true;

    fn value(self) -> f64 {
        self.value
    }
    fn lift(self, c: f64) -> Self {
        self.tape.constant(c)
    }
    fn exp(self) -> Self {
        let v = self.value.exp();
        self.tape.unary(OpKind::Exp, v, self.index, v)
    }
    fn ln(self) -> Self {
        if self.value <= 0.0 {
            let mut nodes = self.tape.nodes.borrow_mut();
            if nodes.log_domain_error.is_none() {
                nodes.log_domain_error = Some(nodes.values.len());
            }
        }
        self.tape
            .unary(OpKind::Ln, self.value.ln(), self.index, 1.0 / self.value)
    }
    fn powi(self, n: i32) -> Self {
        let v = self.value.powi(n);
        let d = n as f64 * self.value.powi(n - 1);
        self.tape.unary(OpKind::PowI, v, self.index, d)
    }
    fn sigmoid(self) -> Self {
        let s = sigmoid(self.value);
        self.tape
            .unary(OpKind::Sigmoid, s, self.index, s * (1.0 - s))
    }
    fn softplus(self) -> Self {
        let v = softplus(self.value);
        self.tape
            .unary(OpKind::Softplus, v, self.index, sigmoid(self.value))
    }
    fn tanh(self) -> Self {
        let t = self.value.tanh();
        self.tape.unary(OpKind::Tanh, t, self.index, 1.0 - t * t)
    }
    fn compose(value: f64, parents: &[Self], partials: &[f64]) -> Self {
        let tape = parents
            .first()
            .expect("traced composite needs at least one parent")
            .tape;
        tape.composite(value, parents, partials)
    }
    fn affine(bias: Self, weights: &[Self], inputs: &[Self], active: &[u32]) -> Self {
        let tape = bias.tape;
        let mut value = bias.value;
        let index = {
            let mut nodes = tape.nodes.borrow_mut();
            for &k in active {
                value += weights[k as usize].value * inputs[k as usize].value;
            }
            let index = nodes.push(OpKind::Composite, value);
            nodes.parents.push(bias.index);
            nodes.partials.push(1.0);
            for &k in active {
                let (w, x) = (weights[k as usize], inputs[k as usize]);
                nodes.parents.extend_from_slice(&[w.index, x.index]);
                nodes.partials.extend_from_slice(&[x.value, w.value]);
            }
            index
        };
        tape.finish(index, value)
    }
    fn affine_const(bias: Self, weights: &[Self], inputs: &[f64], active: &[u32]) -> Self {
        let tape = bias.tape;
        let mut value = bias.value;
        let index = {
            let mut nodes = tape.nodes.borrow_mut();
            for &k in active {
                value += weights[k as usize].value * inputs[k as usize];
            }
            let index = nodes.push(OpKind::Composite, value);
            nodes.parents.push(bias.index);
            nodes.partials.push(1.0);
            for &k in active {
                nodes.parents.push(weights[k as usize].index);
                nodes.partials.push(inputs[k as usize]);
            }
            index
        };
        tape.finish(index, value)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.binary(
            OpKind::Add,
            self.value + rhs.value,
            (self.index, 1.0),
            (rhs.index, 1.0),
        )
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.binary(
            OpKind::Sub,
            self.value - rhs.value,
            (self.index, 1.0),
            (rhs.index, -1.0),
        )
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.binary(
            OpKind::Mul,
            self.value * rhs.value,
            (self.index, rhs.value),
            (rhs.index, self.value),
        )
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let q = self.value / rhs.value;
        self.tape.binary(
            OpKind::Div,
            q,
            (self.index, 1.0 / rhs.value),
            (rhs.index, -q / rhs.value),
        )
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.unary(OpKind::Neg, -self.value, self.index, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.tape
            .unary(OpKind::Add, self.value + rhs, self.index, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.tape
            .unary(OpKind::Sub, self.value - rhs, self.index, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.tape
            .unary(OpKind::Mul, self.value * rhs, self.index, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Var<'t> {
        self.tape
            .unary(OpKind::Div, self.value / rhs, self.index, 1.0 / rhs)
    }
}

/// Flat vector of named parameter blocks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector {
    values: Vec<f64>,
    blocks: Vec<(String, Range<usize>)>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_block(&mut self, name: impl Into<String>, values: &[f64]) {
        let start = self.values.len();
        self.values.extend_from_slice(values);
        self.blocks.push((name.into(), start..self.values.len()));
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.range(name).map(|r| &self.values[r])
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.clone())
    }

    pub fn block_names(&self) -> impl Iterator<Item = &str> {
        self.blocks.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// Same block layout, new values.
    pub fn unflatten(&self, values: &[f64]) -> Result<ParamVector> {
        if values.len() != self.values.len() {
            return Err(Error::Data(format!(
                "expected {} parameters, got {}",
                self.values.len(),
                values.len()
            )));
        }
        Ok(ParamVector {
            values: values.to_vec(),
            blocks: self.blocks.clone(),
        })
    }
}

/// Value and gradient of `objective` at `params`.
pub fn grad<F>(params: &[f64], objective: F) -> Result<(f64, Vec<f64>)>
where
    F: for<'t> FnOnce(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let leaves = tape.vars(params);
    let out = objective(&tape, &leaves);
    let grads = tape.gradient(out)?;
    Ok((out.value(), grads.wrt_all(&leaves)))
}

/// Central finite differences with step `h`.
pub fn finite_difference<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Outcome of comparing an analytic gradient with finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// Index of the worst component and its error under the mixed rule.
    pub worst: Option<(usize, f64)>,
    pub passed: bool,
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_ABS_TOL: f64 = 1e-7;
pub const FD_SMALL_GRAD: f64 = 1e-3;

/// Relative error `rel_tol`, or absolute `abs_tol` where `|g| < small`.
pub fn compare_gradients(
    analytic: &[f64],
    numeric: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    small: f64,
) -> GradCheck {
    let mut worst: Option<(usize, f64)> = None;
    let mut passed = analytic.len() == numeric.len();
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let scale = a.abs().max(n.abs());
        let ok = if scale < small {
            (a - n).abs() <= abs_tol
        } else {
            (a - n).abs() <= rel_tol * scale
        };
        let err = if scale < small {
            (a - n).abs() / abs_tol * rel_tol
        } else {
            (a - n).abs() / scale
        };
        if !ok || !a.is_finite() {
            passed = false;
        }
        if worst.is_none_or(|(_, w)| err > w) {
            worst = Some((i, err));
        }
    }
    GradCheck {
        analytic: analytic.to_vec(),
        numeric: numeric.to_vec(),
        worst,
        passed,
    }
}

/// Tape gradient of `objective` against central differences of `plain`.
pub fn check_gradient<F, G>(x: &[f64], objective: F, plain: G) -> Result<GradCheck>
where
    F: for<'t> FnOnce(&'t Tape, &[Var<'t>]) -> Var<'t>,
    G: Fn(&[f64]) -> f64,
{
    let (_, analytic) = grad(x, objective)?;
    let numeric = finite_difference(plain, x, FD_STEP);
    Ok(compare_gradients(
        &analytic,
        &numeric,
        FD_REL_TOL,
        FD_ABS_TOL,
        FD_SMALL_GRAD,
    ))
}
