//! Core library for studying poisoning attacks on locally-differentially-private
//! telemetry collection: dataset modeling, LDP mechanisms with fault-tolerance
//! bounds, three stealth-constrained attack modes, a three-stage attribute-level
//! detection pipeline, and a latent-bias feature miner with a forest classifier
//! for per-device poison identification.

pub mod attack;
pub mod dataset;
pub mod detect;
pub mod error;
pub mod identify;
pub mod ldp;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
