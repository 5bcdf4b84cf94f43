use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{ClientShard, LabeledDataset};
use crate::seed::SimRng;
use crate::{seed, ClientId, Error, Result};

/// Maximum number of full Dirichlet draws before giving up on `min_size`.
pub const DIRICHLET_RESAMPLE_CAP: usize = 1000;

/// How samples are divided among clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSpec {
    Iid,
    Dirichlet {
        alpha: f64,
        #[serde(default = "default_min_size")]
        min_size: usize,
    },
    LabelShard {
        shards_per_client: usize,
    },
}

fn default_min_size() -> usize {
    1
}

impl PartitionSpec {
    pub fn apply(&self, ds: &LabeledDataset, n_clients: usize, seed: u64) -> Result<Vec<ClientShard>> {
        match *self {
            PartitionSpec::Iid => partition_iid(ds, n_clients, seed),
            PartitionSpec::Dirichlet { alpha, min_size } => {
                partition_dirichlet(ds, n_clients, alpha, min_size, seed)
            }
            PartitionSpec::LabelShard { shards_per_client } => {
                partition_label_shard(ds, n_clients, shards_per_client, seed)
            }
        }
    }

    /// Raises the minimum shard size where the scheme has one.
    pub fn with_min_size_at_least(mut self, floor: usize) -> Self {
        if let PartitionSpec::Dirichlet { min_size, .. } = &mut self {
            *min_size = (*min_size).max(floor);
        }
        self
    }
}

fn check_clients(ds: &LabeledDataset, n_clients: usize) -> Result<()> {
    if n_clients == 0 {
        return Err(Error::invalid("n_clients", "must be at least 1"));
    }
    if n_clients > ds.len() {
        return Err(Error::invalid(
            "n_clients",
            format!("{n_clients} clients exceed {} samples", ds.len()),
        ));
    }
    Ok(())
}

/// Shuffles all indices and deals them round-robin, so shard sizes differ by
/// at most one.
pub fn partition_iid(ds: &LabeledDataset, n_clients: usize, seed: u64) -> Result<Vec<ClientShard>> {
    check_clients(ds, n_clients)?;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut seed::rng(seed));
    let mut shards: Vec<Vec<usize>> = (0..n_clients)
        .map(|_| Vec::with_capacity(ds.len() / n_clients + 1))
        .collect();
    for (pos, idx) in order.into_iter().enumerate() {
        shards[pos % n_clients].push(idx);
    }
    Ok(finish(shards))
}

/// Label-skewed partition: for every class, client shares are drawn from a
/// symmetric Dirichlet(`alpha`). The whole draw is repeated until every
/// client holds at least `min_size` samples, up to
/// [`DIRICHLET_RESAMPLE_CAP`] attempts.
pub fn partition_dirichlet(
    ds: &LabeledDataset,
    n_clients: usize,
    alpha: f64,
    min_size: usize,
    seed: u64,
) -> Result<Vec<ClientShard>> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid("alpha", "must be finite and positive"));
    }
    check_clients(ds, n_clients)?;
    let min_size = min_size.max(1);
    if n_clients.saturating_mul(min_size) > ds.len() {
        return Err(Error::invalid(
            "min_size",
            format!(
                "{n_clients} clients x {min_size} samples exceed {} samples",
                ds.len()
            ),
        ));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::invalid("alpha", format!("{e}")))?;

    let mut by_class: Vec<Vec<usize>> = (0..ds.num_classes()).map(|_| Vec::new()).collect();
    for i in 0..ds.len() {
        by_class[ds.label(i)].push(i);
    }

    let mut rng = seed::rng(seed);
    for _ in 0..DIRICHLET_RESAMPLE_CAP {
        let mut shards: Vec<Vec<usize>> = (0..n_clients).map(|_| Vec::new()).collect();
        for members in &by_class {
            let mut members = members.clone();
            members.shuffle(&mut rng);
            let shares = dirichlet(&gamma, n_clients, &mut rng);
            let total = members.len();
            let mut cumulative = 0.0;
            let mut start = 0;
            for (client, share) in shares.iter().enumerate() {
                cumulative += share;
                let end = if client + 1 == n_clients {
                    total
                } else {
                    ((cumulative * total as f64) as usize).clamp(start, total)
                };
                shards[client].extend_from_slice(&members[start..end]);
                start = end;
            }
        }
        if shards.iter().all(|s| s.len() >= min_size) {
            return Ok(finish(shards));
        }
    }
    Err(Error::ResampleCapExceeded {
        min_size,
        cap: DIRICHLET_RESAMPLE_CAP,
    })
}

fn dirichlet(gamma: &Gamma<f64>, k: usize, rng: &mut SimRng) -> Vec<f64> {
    let mut draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        draws.iter_mut().for_each(|d| *d /= sum);
    } else {
        // Every gamma draw underflowed (tiny alpha): all mass on one client.
        draws.iter_mut().for_each(|d| *d = 0.0);
        draws[rng.random_range(0..k)] = 1.0;
    }
    draws
}

/// Sorts samples by label, cuts them into `n_clients * shards_per_client`
/// contiguous pieces and hands each client `shards_per_client` random pieces.
pub fn partition_label_shard(
    ds: &LabeledDataset,
    n_clients: usize,
    shards_per_client: usize,
    seed: u64,
) -> Result<Vec<ClientShard>> {
    check_clients(ds, n_clients)?;
    if shards_per_client == 0 {
        return Err(Error::invalid("shards_per_client", "must be at least 1"));
    }
    let pieces = n_clients * shards_per_client;
    if pieces > ds.len() {
        return Err(Error::invalid(
            "shards_per_client",
            format!("{pieces} label shards exceed {} samples", ds.len()),
        ));
    }
    let mut rng = seed::rng(seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|&i| ds.label(i));

    let mut piece_ids: Vec<usize> = (0..pieces).collect();
    piece_ids.shuffle(&mut rng);
    let bounds = |p: usize| (p * ds.len() / pieces, (p + 1) * ds.len() / pieces);

    let shards = piece_ids
        .chunks(shards_per_client)
        .map(|owned| {
            owned
                .iter()
                .flat_map(|&p| {
                    let (lo, hi) = bounds(p);
                    order[lo..hi].iter().copied()
                })
                .collect()
        })
        .collect();
    Ok(finish(shards))
}

fn finish(shards: Vec<Vec<usize>>) -> Vec<ClientShard> {
    shards
        .into_iter()
        .enumerate()
        .map(|(id, mut indices)| {
            indices.sort_unstable();
            ClientShard::new(ClientId(id), indices)
        })
        .collect()
}
