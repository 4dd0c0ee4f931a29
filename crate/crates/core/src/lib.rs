//! Decentralized gradient descent (DGD) with diminishing stepsizes
//! `alpha(t) = a / (t + w)^p`, simulated on configurable networks and
//! paired with closed-form envelopes for boundedness, consensus and
//! optimality so every trajectory can be checked against its guarantee.
//!
//! Module map:
//! - [`network`]: graphs, doubly stochastic mixing matrices, spectral norm `beta`.
//! - [`objectives`]: local cost ensembles with smoothness/convexity constants.
//! - [`schedules`]: stepsize laws and admissibility thresholds.
//! - [`engine`]: the DGD iteration, metrics and divergence detection.
//! - [`certificates`]: uniform radius, consensus and rate envelopes, recursion oracles.
//! - [`sharpness`]: the two-agent convex/concave divergence example.
//! - [`harness`]: config-driven experiments, CSV artifacts, slope fits.

pub mod certificates;
pub mod engine;
pub mod error;
pub mod harness;
pub mod network;
pub mod objectives;
pub mod rng;
pub mod schedules;
pub mod sharpness;

pub use error::{DgdError, Result};
