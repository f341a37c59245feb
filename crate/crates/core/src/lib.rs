//! Bayesian principal stratification when principal ignorability may fail.
//!
//! The crate covers the joint Gaussian outcome/strata model, its Gibbs
//! sampler, closed-form partial-identification regions for the coefficients
//! that carry the violation, an asymptotic posterior-variance approximation
//! for the strata correlation, a binary-intermediate analogue, and a
//! simulation harness.

pub mod asymvar;
pub mod binary;
pub mod cli;
pub mod error;
pub mod gibbs;
pub mod harness;
pub mod pir;
pub mod probkit;
pub mod psmodel;

pub use error::{Error, ErrorKind, Result};
