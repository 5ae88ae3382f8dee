//! Online Bayesian learning of neural-network parameters with a Gaussian
//! posterior whose precision is diagonal plus low rank.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs and an explicit seed; file formats, configuration
//! and the command line live in the `lofi` companion crate.
//!
//! Layout:
//! - [`belief`]: posterior representations, dense conversions, sampling, checkpoint codec.
//! - [`model`]: MLP observation models, Jacobians, moment-matched linearization.
//! - [`lofi`]: the diagonal and spherical filters.
//! - [`inflation`]: covariance inflation (Bayesian, simple, hybrid).
//! - [`baselines`]: full-covariance and diagonal EKFs, iterated variants, replay SGD.
//! - [`predictive`]: plugin, Monte Carlo, Gaussian and probit predictive distributions.
//! - [`streams`]: synthetic non-stationary streams and prequential scoring.
//! - [`bandit`]: contextual bandit environment and policies.
//! - [`adaptive`]: observation-noise tracking and random-search tuning.
//! - [`learner`]: a uniform online-learner interface over all methods.
#![no_std]
// Float math comes from `num_traits::Float` (libm). When std is linked into
// the build its inherent methods win, so those imports carry allow attributes.

extern crate alloc;

pub mod adaptive;
pub mod bandit;
pub mod baselines;
pub mod belief;
mod error;
pub mod inflation;
pub mod learner;
pub mod linalg;
pub mod lofi;
pub mod model;
pub mod predictive;
pub mod rng;
pub mod streams;
#[cfg(test)]
mod testutil;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
