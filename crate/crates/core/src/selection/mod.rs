//! Client selection: utilities, probabilities, client weights and the
//! policies built from them.
//!
//! Every policy goes through the same pipeline: per-client utilities,
//! normalized to selection probabilities `p_i`, client weights
//! `alpha_i = p_i^q / (N (q + 1))`, and a weighted draw without replacement.

mod policy;
mod sampling;
mod utility;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{ClientId, Error, Result};

pub use policy::{
    build_policy, FedFair3, LossProportional, OortStyle, PolicyKind, PopulationView, QFflWeighting,
    RandomUniform, SelectionPolicy,
};
pub use sampling::sample_by_priority;
pub use utility::{
    client_weight, fedfair3_utility, probabilities, qfairness_proportionality_check,
    resource_priority, statistical_utility, system_factor, time_penalty, ClientTerms,
};

/// Hyperparameters shared by the selection policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyParams {
    /// `T`, preferred round duration in seconds.
    pub preferred_round_s: f64,
    /// Time-penalty exponent.
    pub beta: f64,
    /// Fairness exponent used by FedFair3's client weights.
    pub q: f64,
    /// Fairness exponent used by the q-FFL style baseline.
    pub q_large: f64,
    /// Participations allowed before the decay applies.
    pub round_cap: u32,
    /// Per-excess-participation utility multiplier, in `(0, 1]`.
    pub decay: f64,
    /// Divide `lambda` by its population maximum, mapping it into `(0, 1]`.
    pub normalize_priority: bool,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            preferred_round_s: 5.0,
            beta: 2.0,
            q: 2.0,
            q_large: 10.0,
            round_cap: 5,
            decay: 0.5,
            normalize_priority: false,
        }
    }
}

impl PolicyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.preferred_round_s.is_finite() && self.preferred_round_s > 0.0) {
            return Err(Error::invalid("preferred_round_s", "must be positive"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::invalid("beta", "must be non-negative"));
        }
        if !(self.q.is_finite() && self.q >= 0.0) {
            return Err(Error::invalid("q", "must be non-negative"));
        }
        if !(self.q_large.is_finite() && self.q_large >= 0.0) {
            return Err(Error::invalid("q_large", "must be non-negative"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::invalid("decay", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// What the aggregator remembers about each client between rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionState {
    /// Losses of each client's most recent participation; `Some` marks the
    /// client as explored.
    last_losses: Vec<Option<Vec<f64>>>,
    participation: Vec<u32>,
    last_selected_round: Vec<Option<u32>>,
    completed_rounds: u32,
}

impl SelectionState {
    pub fn new(n_clients: usize) -> Self {
        Self {
            last_losses: vec![None; n_clients],
            participation: vec![0; n_clients],
            last_selected_round: vec![None; n_clients],
            completed_rounds: 0,
        }
    }

    pub fn n_clients(&self) -> usize {
        self.participation.len()
    }

    pub fn completed_rounds(&self) -> u32 {
        self.completed_rounds
    }

    pub fn is_explored(&self, id: ClientId) -> bool {
        self.last_losses[id.index()].is_some()
    }

    pub fn explored_count(&self) -> usize {
        self.last_losses.iter().filter(|l| l.is_some()).count()
    }

    pub fn last_losses(&self, id: ClientId) -> Option<&[f64]> {
        self.last_losses[id.index()].as_deref()
    }

    pub fn participation(&self, id: ClientId) -> u32 {
        self.participation[id.index()]
    }

    pub fn participation_counts(&self) -> &[u32] {
        &self.participation
    }

    pub fn last_selected_round(&self, id: ClientId) -> Option<u32> {
        self.last_selected_round[id.index()]
    }

    /// `gamma_i`: whether the client took part in the immediately preceding
    /// round.
    pub fn previously_selected(&self, id: ClientId) -> bool {
        self.completed_rounds > 0 && self.last_selected_round[id.index()] == Some(self.completed_rounds)
    }

    /// Closes a round. Fails without modifying the state if an id is out of
    /// range or repeated.
    pub fn record_round(&mut self, participants: &[(ClientId, Vec<f64>)]) -> Result<()> {
        let mut seen = vec![false; self.n_clients()];
        for (id, losses) in participants {
            let slot = seen.get_mut(id.index()).ok_or_else(|| {
                Error::invalid("participant", format!("client {id} is outside the population"))
            })?;
            if core::mem::replace(slot, true) {
                return Err(Error::DuplicateReport(*id));
            }
            if losses.is_empty() {
                return Err(Error::Empty { what: "participant losses" });
            }
        }
        self.completed_rounds += 1;
        for (id, losses) in participants {
            let i = id.index();
            self.participation[i] += 1;
            self.last_selected_round[i] = Some(self.completed_rounds);
            self.last_losses[i] = Some(losses.clone());
        }
        Ok(())
    }
}

/// A policy's decision for one round. All vectors are indexed by client id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub utilities: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub weights: Vec<f64>,
    /// Selected ids in draw order.
    pub selected: Vec<ClientId>,
}

impl SelectionOutcome {
    pub fn is_selected(&self, id: ClientId) -> bool {
        self.selected.contains(&id)
    }
}
