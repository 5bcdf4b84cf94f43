use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    client_weight, probabilities, resource_priority, sample_by_priority, statistical_utility,
    system_factor, time_penalty, ClientTerms, PolicyParams, SelectionOutcome, SelectionState,
};
use crate::client::ClientProfile;
use crate::{math, ClientId, Error, Result};

/// Everything a policy may look at when scoring clients.
#[derive(Debug, Clone, Copy)]
pub struct PopulationView<'a> {
    pub profiles: &'a [ClientProfile],
    /// Projected `t_i` of each client for the coming round.
    pub round_times: &'a [f64],
    pub state: &'a SelectionState,
}

impl PopulationView<'_> {
    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    fn check(&self) -> Result<()> {
        if self.profiles.is_empty() {
            return Err(Error::Empty { what: "client population" });
        }
        for (what, len) in [
            ("round times", self.round_times.len()),
            ("selection state", self.state.n_clients()),
        ] {
            if len != self.profiles.len() {
                return Err(Error::CountMismatch {
                    what,
                    expected: self.profiles.len(),
                    found: len,
                });
            }
        }
        Ok(())
    }

    /// Applies `score` to each explored client's most recent losses.
    /// Unexplored clients receive the largest explored score (0 when nobody
    /// has been explored yet).
    fn loss_scores(&self, score: impl Fn(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
        let mut scores = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            scores.push(match self.state.last_losses(ClientId(i)) {
                Some(losses) => Some(score(losses)?),
                None => None,
            });
        }
        let init = scores.iter().flatten().copied().fold(0.0, f64::max);
        Ok(scores.into_iter().map(|s| s.unwrap_or(init)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "fedfair3")]
    FedFair3,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "loss_prop")]
    LossProportional,
    #[serde(rename = "oort")]
    Oort,
    #[serde(rename = "qffl")]
    QFfl,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::FedFair3,
        PolicyKind::Random,
        PolicyKind::LossProportional,
        PolicyKind::Oort,
        PolicyKind::QFfl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::FedFair3 => "fedfair3",
            PolicyKind::Random => "random",
            PolicyKind::LossProportional => "loss_prop",
            PolicyKind::Oort => "oort",
            PolicyKind::QFfl => "qffl",
        }
    }
}

impl core::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::invalid(
                    "policy",
                    format!("unknown policy `{s}` (expected fedfair3, random, loss_prop, oort or qffl)"),
                )
            })
    }
}

/// The uniform policy interface.
pub trait SelectionPolicy: Send + Sync {
    fn kind(&self) -> PolicyKind;

    /// Non-negative utility per client.
    fn utilities(&self, view: &PopulationView<'_>) -> Result<Vec<f64>>;

    /// Exponent `q` of the client weights.
    fn weight_exponent(&self) -> f64 {
        0.0
    }

    /// Draw the selected set uniformly instead of by `p_i`.
    fn samples_uniformly(&self) -> bool {
        false
    }

    fn select(&self, view: &PopulationView<'_>, m: usize, seed: u64) -> Result<SelectionOutcome> {
        view.check()?;
        let utilities = self.utilities(view)?;
        let probabilities = probabilities(&utilities)?;
        let n = view.len();
        let q = self.weight_exponent();
        let weights = probabilities.iter().map(|&p| client_weight(p, q, n)).collect();
        let selected = if self.samples_uniformly() {
            sample_by_priority(&vec![1.0; n], m, seed)?
        } else {
            sample_by_priority(&probabilities, m, seed)?
        };
        Ok(SelectionOutcome {
            utilities,
            probabilities,
            weights,
            selected,
        })
    }
}

/// Utility = statistical utility x time penalty x resource boost x
/// participation decay, with `alpha_i` using `q`.
#[derive(Debug, Clone)]
pub struct FedFair3 {
    pub params: PolicyParams,
}

impl FedFair3 {
    fn priorities(&self, profiles: &[ClientProfile]) -> Vec<f64> {
        let raw: Vec<f64> = profiles.iter().map(resource_priority).collect();
        if self.params.normalize_priority {
            let max = raw.iter().copied().fold(0.0, f64::max);
            raw.iter().map(|l| l / max).collect()
        } else {
            raw
        }
    }
}

impl SelectionPolicy for FedFair3 {
    fn kind(&self) -> PolicyKind {
        PolicyKind::FedFair3
    }

    fn utilities(&self, view: &PopulationView<'_>) -> Result<Vec<f64>> {
        let stat = view.loss_scores(statistical_utility)?;
        let priorities = self.priorities(view.profiles);
        (0..view.len())
            .map(|i| {
                let id = ClientId(i);
                let terms = ClientTerms {
                    round_time_s: view.round_times[i],
                    priority: priorities[i],
                    previously_selected: view.state.previously_selected(id),
                    participation: view.state.participation(id),
                };
                Ok(stat[i] * system_factor(&terms, &self.params)?)
            })
            .collect()
    }

    fn weight_exponent(&self) -> f64 {
        self.params.q
    }
}

/// FedAvg-style uniform selection.
#[derive(Debug, Clone, Default)]
pub struct RandomUniform;

impl SelectionPolicy for RandomUniform {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Random
    }

    fn utilities(&self, view: &PopulationView<'_>) -> Result<Vec<f64>> {
        Ok(vec![1.0; view.len()])
    }
}

/// Importance sampling: `p_i` proportional to the client's mean loss.
#[derive(Debug, Clone, Default)]
pub struct LossProportional;

impl SelectionPolicy for LossProportional {
    fn kind(&self) -> PolicyKind {
        PolicyKind::LossProportional
    }

    fn utilities(&self, view: &PopulationView<'_>) -> Result<Vec<f64>> {
        view.loss_scores(|l| Ok(math::mean(l)))
    }
}

/// Statistical utility with the time penalty only: FedFair3 without the
/// resource boost or participation decay.
#[derive(Debug, Clone)]
pub struct OortStyle {
    pub params: PolicyParams,
}

impl SelectionPolicy for OortStyle {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Oort
    }

    fn utilities(&self, view: &PopulationView<'_>) -> Result<Vec<f64>> {
        let stat = view.loss_scores(statistical_utility)?;
        (0..view.len())
            .map(|i| {
                let penalty = time_penalty(
                    self.params.preferred_round_s,
                    view.round_times[i],
                    self.params.beta,
                )?;
                Ok(stat[i] * penalty)
            })
            .collect()
    }
}

/// Uniform selection with loss-proportional `p_i` and a large weight
/// exponent, approximating agnostic (minimax) weighting.
#[derive(Debug, Clone)]
pub struct QFflWeighting {
    pub q_large: f64,
}

impl SelectionPolicy for QFflWeighting {
    fn kind(&self) -> PolicyKind {
        PolicyKind::QFfl
    }

    fn utilities(&self, view: &PopulationView<'_>) -> Result<Vec<f64>> {
        view.loss_scores(|l| Ok(math::mean(l)))
    }

    fn weight_exponent(&self) -> f64 {
        self.q_large
    }

    fn samples_uniformly(&self) -> bool {
        true
    }
}

pub fn build_policy(kind: PolicyKind, params: &PolicyParams) -> Box<dyn SelectionPolicy> {
    match kind {
        PolicyKind::FedFair3 => Box::new(FedFair3 {
            params: params.clone(),
        }),
        PolicyKind::Random => Box::new(RandomUniform),
        PolicyKind::LossProportional => Box::new(LossProportional),
        PolicyKind::Oort => Box::new(OortStyle {
            params: params.clone(),
        }),
        PolicyKind::QFfl => Box::new(QFflWeighting {
            q_large: params.q_large,
        }),
    }
}
