//! Stochastic Polyak-type optimizers (SP, SPS_max, TAPS, MOTAPS) for
//! generalized linear models, reference baselines, auxiliary-objective
//! checks and an experiment harness.

pub mod auxiliary;
pub mod baselines;
pub mod config;
pub mod data;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod losses;
pub mod parallel;
pub mod polyak;
pub mod trace;
pub mod verify;

pub use error::{Error, Result};
