//! Communication cost of gradient aggregation under a Gaussian model.
//!
//! Workers observe noisy copies `Y_k = X + N_k` of a global gradient and
//! quantize them for a central node that forms an unbiased estimate of `X`.
//! The crate computes the resulting rate region, sum-rate-distortion
//! functions and weighted rate allocations, plans total training cost
//! against an SGD convergence bound, and checks the predictions with
//! Monte Carlo and least-squares SGD simulations.
//!
//! Rates are in nats throughout the library; conversion to bits happens only
//! at the output boundary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod achievability;
pub mod boundary;
pub mod cli;
pub mod cost;
pub mod error;
pub mod model;
pub mod numeric;
pub mod region;
pub mod sgd;
pub mod stats;

pub use error::{Error, Result};
