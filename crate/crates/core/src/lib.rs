//! Simulation core for fair, resource-aware client selection in federated
//! learning.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. It contains:
//!
//! - [`data`]: labeled datasets, synthetic generation and client partitioning
//! - [`model`]: multinomial logistic regression with exact gradients and local SGD
//! - [`client`]: heterogeneous device profiles, round-time and resource model
//! - [`selection`]: utility-driven probabilistic selection and baseline policies
//! - [`budget`]: per-resource budget accounting with predictive halting
//! - [`engine`]: the aggregator loop tying everything together
//! - [`metrics`]: accuracy, variance / cosine uniformity and participation fairness
//!
//! Every stochastic step is driven by an explicit seed, so a scenario and a
//! configuration fully determine a run.

#![no_std]

extern crate alloc;

pub mod budget;
pub mod client;
pub mod data;
pub mod engine;
mod error;
pub mod math;
pub mod metrics;
pub mod model;
pub mod seed;
pub mod selection;

pub use error::{Error, Result};

/// Dense client identifier. Clients of a population are numbered `0..N`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(transparent)]
pub struct ClientId(pub usize);

impl ClientId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl core::fmt::Display for ClientId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.0)
    }
}
