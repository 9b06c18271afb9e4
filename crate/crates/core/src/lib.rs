//! Adaptive sharpness of trained models.
//!
//! The crate measures how much the training loss grows when the weights are
//! perturbed inside an elementwise-scaled ball, either on average (Gaussian or
//! uniform noise) or in the worst case (Auto-PGD in weight space). Around a
//! point `w` the measures reduce to Hessian quantities, which [`hessian`]
//! computes exactly for small models and stochastically for large ones.
//!
//! Module map:
//!
//! - [`autodiff`]: reverse-mode differentiation over dense `f64` arrays, with
//!   forward-over-reverse Hessian-vector products.
//! - [`models`]: linear / ReLU MLP / diagonal linear network, losses, logit
//!   normalization, reparametrizations and checkpoints.
//! - [`perturb`]: scaling vectors, projections and noise sampling.
//! - [`sharpness`]: average-case and worst-case estimators, Auto-PGD and the
//!   small-radius limits.
//! - [`hessian`]: dense Hessians, power iteration, Hutchinson traces.
//! - [`diaglin`]: sparse regression with diagonal linear networks.
//! - [`pool`]: pools of trained classifiers, Kendall τ and correlation reports.
//!
//! Work that is independent across batches, samples, probes or models goes
//! through [`exec`], which uses rayon when the `parallel` feature is enabled
//! and falls back to a plain loop otherwise. Results never depend on the
//! execution policy.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod data;
pub mod diaglin;
pub mod error;
pub mod exec;
pub mod hessian;
pub mod models;
pub mod perturb;
pub mod pool;
pub mod rng;
pub mod sharpness;

pub use error::{Error, Result};
