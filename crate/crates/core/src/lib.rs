//! Structured generative models built on closed-form Renyi order-2 information.
//!
//! The crate is organized bottom-up:
//!
//! - [`mixture`]: exact pairwise algebra for diagonal Gaussian mixtures.
//! - [`autodiff`]: a small reverse-mode tape and the networks that emit
//!   infinite-mixture parameters.
//! - [`costs`]: the entropy, divergence and conditional-entropy objectives with
//!   bias-corrected moving-average statistics.
//! - [`trainer`]: training loops for density, conditional density, probability
//!   ratio, adversarial and mutual-information estimation.
//! - [`estimators`], [`baselines`], [`data`], [`oracle`]: evaluation metrics,
//!   the EM mixture baseline, synthetic generators and grid quadrature.
//! - [`cli`]: the `sgm` command-line front end.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the scalar to `f64`, which is what the CLI and trainers use by default.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod baselines;
pub mod cli;
pub mod costs;
pub mod data;
pub mod error;
pub mod estimators;
pub mod mixture;
pub mod oracle;
pub mod points;
pub mod scalar;
pub mod trainer;

pub use error::{Result, SgmError};
pub use scalar::Scalar;

pub type Component = mixture::GaussianComponent<f64>;
pub type Mixture = mixture::FiniteMixture<f64>;
pub type Points = points::PointSet<f64>;
pub type Network = autodiff::ImogNetwork<f64>;
pub type RatioNet = autodiff::RatioNetwork<f64>;
pub type Filter = costs::AdpFilter<f64>;
