//! AMP-based model retraining under label noise.
//!
//! Simulators, aggregators and AMP iterations for a two-class Gaussian
//! mixture and for a generalized linear model, together with their
//! state-evolution predictions, plus a logit-mixture aggregator for use with
//! real models.

pub mod bayesmix;
pub mod error;
pub mod glm;
pub mod glm_se;
pub mod gmm;
pub mod gmm_se;
pub mod harness;
pub mod io;
pub mod numerics;

pub use error::{Error, Result};
