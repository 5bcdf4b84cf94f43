//! Simulated heterogeneous devices.
//!
//! A client's round time is modelled as
//! `t_i = tau * batch / c_i + r_i + bandwidth`: compute-proportional work, a
//! fixed per-round overhead and one model transfer. Energy is charged at
//! `q_i` joules per second of round time.

use alloc::format;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Index, IndexMut};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{ClientShard, LabeledDataset};
use crate::model::{self, ModelParams};
use crate::{math, seed, ClientId, Error, Result};

/// Static device features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    pub id: ClientId,
    /// `c_i`, samples processed per second.
    pub compute: f64,
    /// `d_i`, training samples held; mirrors the client's shard size.
    pub data_size: usize,
    /// `q_i`, joules per second while busy.
    pub energy_rate: f64,
    /// `r_i`, fixed per-round overhead in seconds.
    pub round_overhead: f64,
    /// Seconds per model transfer.
    pub bandwidth: f64,
}

impl ClientProfile {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("client {}: {v} must be positive", self.id)))
            }
        };
        positive("compute", self.compute)?;
        positive("energy_rate", self.energy_rate)?;
        positive("round_overhead", self.round_overhead)?;
        if !(self.bandwidth.is_finite() && self.bandwidth >= 0.0) {
            return Err(Error::invalid("bandwidth", "must be finite and non-negative"));
        }
        if self.data_size == 0 {
            return Err(Error::invalid("data_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// A slow-network subpopulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StragglerSpec {
    /// Fraction of clients (rounded down) that become stragglers.
    pub fraction: f64,
    /// Extra transfer seconds, drawn uniformly from `[lo, hi]`.
    pub extra_transfer: (f64, f64),
}

/// Generative model for device profiles. Each of `c`, `q` and `r` is
/// log-normal: `median * exp(sigma * z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeterogeneitySpec {
    pub compute_median: f64,
    pub compute_sigma: f64,
    pub energy_median: f64,
    pub energy_sigma: f64,
    pub overhead_median: f64,
    pub overhead_sigma: f64,
    pub bandwidth_range: (f64, f64),
    pub stragglers: Option<StragglerSpec>,
}

impl Default for HeterogeneitySpec {
    fn default() -> Self {
        Self {
            compute_median: 100.0,
            compute_sigma: 0.5,
            energy_median: 1.0,
            energy_sigma: 0.5,
            overhead_median: 0.5,
            overhead_sigma: 0.5,
            bandwidth_range: (0.1, 0.5),
            stragglers: None,
        }
    }
}

impl HeterogeneitySpec {
    /// Every client identical apart from its data size.
    pub fn homogeneous() -> Self {
        Self {
            compute_sigma: 0.0,
            energy_sigma: 0.0,
            overhead_sigma: 0.0,
            bandwidth_range: (0.3, 0.3),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, median, sigma) in [
            ("compute", self.compute_median, self.compute_sigma),
            ("energy", self.energy_median, self.energy_sigma),
            ("overhead", self.overhead_median, self.overhead_sigma),
        ] {
            if !(median.is_finite() && median > 0.0) {
                return Err(Error::invalid(name, "median must be positive"));
            }
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(Error::invalid(name, "sigma must be non-negative"));
            }
        }
        let (lo, hi) = self.bandwidth_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return Err(Error::invalid("bandwidth_range", "need 0 <= lo <= hi"));
        }
        if let Some(s) = &self.stragglers {
            if !(0.0..=1.0).contains(&s.fraction) {
                return Err(Error::invalid("stragglers.fraction", "must lie in [0, 1]"));
            }
            let (lo, hi) = s.extra_transfer;
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return Err(Error::invalid("stragglers.extra_transfer", "need 0 <= lo <= hi"));
            }
        }
        Ok(())
    }
}

/// Draws one profile per shard. `d_i` is copied from the shard size.
pub fn sample_profiles(
    n_clients: usize,
    spec: &HeterogeneitySpec,
    shards: &[ClientShard],
    seed: u64,
) -> Result<Vec<ClientProfile>> {
    spec.validate()?;
    if shards.len() != n_clients {
        return Err(Error::CountMismatch {
            what: "client shards",
            expected: n_clients,
            found: shards.len(),
        });
    }
    let mut rng = seed::rng(seed);
    let lognormal = |rng: &mut seed::SimRng, median: f64, sigma: f64| {
        median * math::exp(sigma * rng.sample::<f64, _>(StandardNormal))
    };
    let mut profiles: Vec<ClientProfile> = shards
        .iter()
        .enumerate()
        .map(|(i, shard)| {
            let (lo, hi) = spec.bandwidth_range;
            ClientProfile {
                id: ClientId(i),
                compute: lognormal(&mut rng, spec.compute_median, spec.compute_sigma),
                data_size: shard.len(),
                energy_rate: lognormal(&mut rng, spec.energy_median, spec.energy_sigma),
                round_overhead: lognormal(&mut rng, spec.overhead_median, spec.overhead_sigma),
                bandwidth: lo + (hi - lo) * rng.random::<f64>(),
            }
        })
        .collect();

    if let Some(s) = &spec.stragglers {
        let count = (s.fraction * n_clients as f64) as usize;
        let mut ids: Vec<usize> = (0..n_clients).collect();
        ids.shuffle(&mut rng);
        let (lo, hi) = s.extra_transfer;
        for &i in &ids[..count] {
            profiles[i].bandwidth += lo + (hi - lo) * rng.random::<f64>();
        }
    }
    for p in &profiles {
        p.validate()?;
    }
    Ok(profiles)
}

/// `t_i = tau * batch_size / c_i + r_i + bandwidth`, in seconds.
pub fn simulate_round_time(p: &ClientProfile, tau: u32, batch_size: usize) -> Result<f64> {
    if tau == 0 {
        return Err(Error::invalid("tau", "must be at least 1"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch_size", "must be at least 1"));
    }
    Ok(f64::from(tau) * batch_size as f64 / p.compute + p.round_overhead + p.bandwidth)
}

/// Resource types tracked by budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceKind {
    /// Device-seconds.
    Time,
    /// Joules.
    Energy,
    /// Samples processed.
    Compute,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 3] = [ResourceKind::Time, ResourceKind::Energy, ResourceKind::Compute];

    pub fn name(self) -> &'static str {
        match self {
            ResourceKind::Time => "time",
            ResourceKind::Energy => "energy",
            ResourceKind::Compute => "compute",
        }
    }
}

impl core::fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// One amount per [`ResourceKind`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResourceVec {
    pub time: f64,
    pub energy: f64,
    pub compute: f64,
}

impl ResourceVec {
    pub const ZERO: ResourceVec = ResourceVec::splat(0.0);
    pub const UNBOUNDED: ResourceVec = ResourceVec::splat(f64::INFINITY);

    pub const fn splat(v: f64) -> Self {
        Self {
            time: v,
            energy: v,
            compute: v,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ResourceKind, f64)> + '_ {
        ResourceKind::ALL.into_iter().map(move |k| (k, self[k]))
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            time: f(self.time),
            energy: f(self.energy),
            compute: f(self.compute),
        }
    }

    pub fn zip_with(self, other: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            time: f(self.time, other.time),
            energy: f(self.energy, other.energy),
            compute: f(self.compute, other.compute),
        }
    }
}

impl Default for ResourceVec {
    fn default() -> Self {
        Self::ZERO
    }
}

impl Index<ResourceKind> for ResourceVec {
    type Output = f64;
    fn index(&self, k: ResourceKind) -> &f64 {
        match k {
            ResourceKind::Time => &self.time,
            ResourceKind::Energy => &self.energy,
            ResourceKind::Compute => &self.compute,
        }
    }
}

impl IndexMut<ResourceKind> for ResourceVec {
    fn index_mut(&mut self, k: ResourceKind) -> &mut f64 {
        match k {
            ResourceKind::Time => &mut self.time,
            ResourceKind::Energy => &mut self.energy,
            ResourceKind::Compute => &mut self.compute,
        }
    }
}

impl Add for ResourceVec {
    type Output = ResourceVec;
    fn add(self, rhs: Self) -> Self {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl AddAssign for ResourceVec {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

/// Local training hyperparameters sent to a client with the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTraining {
    pub eta: f64,
    pub tau: u32,
    pub batch_size: usize,
}

impl LocalTraining {
    /// Samples per SGD step for a shard of `n` samples.
    pub fn effective_batch(&self, n: usize) -> usize {
        self.batch_size.min(n).max(1)
    }
}

/// Round time and resource usage a client will incur. Deterministic, so the
/// aggregator can project a round's cost before dispatching it.
pub fn round_cost(p: &ClientProfile, shard_len: usize, training: &LocalTraining) -> Result<(f64, ResourceVec)> {
    let batch = training.effective_batch(shard_len);
    let t = simulate_round_time(p, training.tau, batch)?;
    Ok((
        t,
        ResourceVec {
            time: t,
            energy: p.energy_rate * t,
            compute: f64::from(training.tau) * batch as f64,
        },
    ))
}

/// What a client sends back after a local round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientReport {
    pub id: ClientId,
    /// Locally updated parameters `w_i`.
    pub params: ModelParams,
    /// Full-shard gradient at the round's starting model.
    pub gradient: Vec<f64>,
    /// Per-sample losses of the final local batch.
    pub batch_losses: Vec<f64>,
    /// `t_i`, seconds.
    pub elapsed_s: f64,
    pub usage: ResourceVec,
}

/// Executes one local round: the start-of-round gradient, `tau` SGD steps,
/// and the round's simulated time and resource usage.
pub fn run_local_round(
    p: &ClientProfile,
    shard: &ClientShard,
    ds: &LabeledDataset,
    w: &ModelParams,
    training: &LocalTraining,
    seed: u64,
) -> Result<ClientReport> {
    if shard.is_empty() {
        return Err(Error::Empty { what: "client shard" });
    }
    let (_, gradient) = model::loss_and_grad(w, ds, &shard.indices)?;
    let (params, losses) = model::sgd_local_update(
        w,
        shard,
        ds,
        training.eta,
        training.tau,
        training.batch_size,
        seed,
    )?;
    let (elapsed_s, usage) = round_cost(p, shard.len(), training)?;
    Ok(ClientReport {
        id: p.id,
        params,
        gradient,
        batch_losses: losses.per_sample,
        elapsed_s,
        usage,
    })
}
