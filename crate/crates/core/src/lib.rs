//! Variational inference with Bernstein-polynomial normalizing flows.
//!
//! The crate is organized bottom-up:
//!
//! * [`autodiff`] — scalar reverse-mode tape and the [`autodiff::Scalar`]
//!   abstraction shared by plain floats and traced values;
//! * [`bernstein`] — one-dimensional monotone Bernstein flow and the
//!   affine–sigmoid sandwich around it;
//! * [`maf`] — triangular multivariate flow driven by a masked network;
//! * [`models`] — the benchmark posteriors in unconstrained space;
//! * [`vi`] — ELBO estimation, RMSprop training, posterior sampling;
//! * [`diagnostics`] — PSIS `k̂`, KL estimators, quadrature;
//! * [`reference`] — conjugate, grid and random-walk Metropolis ground truth.

pub mod autodiff;
pub mod bernstein;
pub mod diagnostics;
pub mod error;
pub mod maf;
pub mod models;
pub mod reference;
pub mod vi;

pub use error::{Error, Result};
