//! Predictive confidence estimation for 1:1 verification, end to end on a
//! synthetic embedding world.
//!
//! The pipeline mirrors the usual quality-estimation workflow:
//!
//! 1. [`embedsim`] builds identities on a low-dimensional subspace and draws
//!    quality-degraded observations of them, with an analytic
//!    recognizability oracle.
//! 2. [`pairgen`] splits identities into two folds, fits a subspace
//!    recognizer on one fold and scores every mated pair of the other.
//! 3. [`confnet`] trains a small feed-forward confidence model so that the
//!    minimum of the two image confidences of a pair matches its score.
//! 4. [`metrics`] and [`fusion`] evaluate the learned confidences with
//!    error-vs-reject curves, TAR@FAR operating points, confidence/similarity
//!    bins and confidence-weighted set fusion.
//! 5. [`pipeline`] ties the stages to on-disk artifacts for the `pcconf` CLI.

pub mod confnet;
pub mod embedsim;
pub mod error;
pub mod fusion;
pub mod linalg;
pub mod metrics;
pub mod pairgen;
pub mod pipeline;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
