//! Sketched least squares with James-Stein shrinkage.
//!
//! The crate solves `min ||A x - y||` approximately from random projections
//! `(SA, Sy)`, shrinks the sketched solution toward zero to trade bias for
//! variance, evaluates the closed-form error bounds of the estimator family,
//! and runs seeded Monte Carlo experiments that compare all of them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod datagen;
pub mod dataio;
pub mod error;
pub mod estimators;
pub mod fwht;
pub mod harness;
pub mod linalg;
pub mod problem;
pub mod seed;
pub mod sketch;

pub use error::{Error, Result};
