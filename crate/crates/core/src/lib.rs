//! Phase-transition thresholds for basis-pursuit (l1) recovery of sparse
//! signals under blockwise-correlated Gaussian sensing matrices.
//!
//! The crate has two sides that are meant to be compared:
//!
//! - the analytic side solves the threshold fixed points, both for i.i.d.
//!   sensing ([`threshold::universal`]) and for the 2x2-block correlated
//!   ensemble `F = Xi sqrt(Rt)` ([`threshold::blockwise`]);
//! - the empirical side samples instances ([`sensing`]), solves basis
//!   pursuit ([`l1`]) while deleting rows one at a time, and extrapolates the
//!   finite-size averages to `N -> inf` ([`experiment`]).
//!
//! [`rmt`] checks the Marchenko-Pastur facts behind the universality of the
//! i.i.d. threshold, and [`prox`] minimizes the coupled N-variable inner
//! problem that appears for a general correlation matrix.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod experiment;
pub mod l1;
pub mod numerics;
pub mod output;
pub mod prox;
pub mod rmt;
pub mod sensing;
pub mod streams;
pub mod threshold;

pub use error::{Error, Result};
