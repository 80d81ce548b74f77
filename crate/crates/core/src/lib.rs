//! Leader–follower abreast formation control for planar unicycles.
//!
//! The follower steers with a constant-bearing law and regulates its speed
//! with one of two feedback laws (leader steering known, or not). This crate
//! simulates the closed loop, extends it to follower chains, estimates the
//! leader's state from relative measurements, and checks the stability
//! results numerically (Lyapunov descent, ISS margin, linearization,
//! convergence to a periodic orbit).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod integrator;
pub mod io;
pub mod parallel;
pub mod scenarios;
pub mod sweep;

pub use error::{FormationError, Result};
