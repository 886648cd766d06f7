//! Mean-field Langevin dynamics for two-layer networks on multi-index
//! targets with anisotropic inputs.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. The `parallel` feature enables rayon over the two phases of a
//! training step.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod math;

pub mod activation;
pub mod covariance;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod mfla;
pub mod net;
pub mod planner;
pub mod rng;
pub mod sphere;
pub mod tasks;
pub mod trace;

pub use error::{Error, Result};
