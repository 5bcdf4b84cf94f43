//! Per-resource budgets with predictive halting.
//!
//! Before each round the aggregator projects the round's cost from the
//! selected clients' deterministic usage plus the per-aggregation cost `r_g`.
//! A round only starts if, after it, one further local iteration and one
//! further aggregation would still fit in every budget:
//!
//! `s + round + max_j(r_j) + r_g <= budget`
//!
//! where `r_j` is client `j`'s per-iteration usage. With one client of
//! constant per-iteration cost `r_l` this is the closed form
//! `(K tau + 1) r_l + (K + 1) r_g <= budget` for round `K`, with `I = K tau`.

use serde::{Deserialize, Serialize};

use crate::client::{ResourceKind, ResourceVec};
use crate::{Error, Result};

/// Optional cap per resource; `None` is unbounded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BudgetLimits {
    pub time: Option<f64>,
    pub energy: Option<f64>,
    pub compute: Option<f64>,
}

impl BudgetLimits {
    pub fn get(&self, kind: ResourceKind) -> f64 {
        let v = match kind {
            ResourceKind::Time => self.time,
            ResourceKind::Energy => self.energy,
            ResourceKind::Compute => self.compute,
        };
        v.unwrap_or(f64::INFINITY)
    }

    pub fn set(&mut self, kind: ResourceKind, value: Option<f64>) {
        match kind {
            ResourceKind::Time => self.time = value,
            ResourceKind::Energy => self.energy = value,
            ResourceKind::Compute => self.compute = value,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BudgetSpec {
    /// `Pi` per resource type.
    pub limits: BudgetLimits,
    /// `r_g`, charged once per aggregation.
    pub global_cost: ResourceVec,
}

impl BudgetSpec {
    pub fn validate(&self) -> Result<()> {
        for kind in ResourceKind::ALL {
            let limit = self.limits.get(kind);
            if limit.is_nan() || limit < 0.0 {
                return Err(Error::invalid("budget.limits", "limits must be non-negative"));
            }
            let g = self.global_cost[kind];
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::invalid("budget.global_cost", "costs must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// Projected cost of the next round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Usage the round itself will add.
    pub round: ResourceVec,
    /// One further local iteration and aggregation that must stay affordable.
    pub headroom: ResourceVec,
}

impl Projection {
    pub fn total(&self) -> ResourceVec {
        self.round + self.headroom
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetDecision {
    Continue,
    Stop(ResourceKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceBudget {
    spec: BudgetSpec,
    used: ResourceVec,
    tau: u32,
    aggregations: u64,
    local_iterations: u64,
}

impl ResourceBudget {
    pub fn new(spec: BudgetSpec, tau: u32) -> Result<Self> {
        spec.validate()?;
        if tau == 0 {
            return Err(Error::invalid("tau", "must be at least 1"));
        }
        Ok(Self {
            spec,
            used: ResourceVec::ZERO,
            tau,
            aggregations: 0,
            local_iterations: 0,
        })
    }

    /// `s`, accumulated usage.
    pub fn used(&self) -> ResourceVec {
        self.used
    }

    pub fn limit(&self, kind: ResourceKind) -> f64 {
        self.spec.limits.get(kind)
    }

    pub fn spec(&self) -> &BudgetSpec {
        &self.spec
    }

    /// `K`, completed aggregations.
    pub fn aggregations(&self) -> u64 {
        self.aggregations
    }

    /// `I`, completed local iterations; always `K * tau`.
    pub fn local_iterations(&self) -> u64 {
        self.local_iterations
    }

    /// Projects a round from each selected client's usage over the round
    /// (`tau` local iterations).
    pub fn project(&self, client_round_usage: &[ResourceVec]) -> Projection {
        let tau = f64::from(self.tau);
        let mut round = self.spec.global_cost;
        let mut per_iteration = ResourceVec::ZERO;
        for usage in client_round_usage {
            round += *usage;
            per_iteration = per_iteration.zip_with(*usage, |a, b| a.max(b / tau));
        }
        Projection {
            round,
            headroom: per_iteration + self.spec.global_cost,
        }
    }

    /// Records a completed round's actual usage.
    pub fn commit(&mut self, round_usage: ResourceVec) {
        self.used += round_usage;
        self.aggregations += 1;
        self.local_iterations += u64::from(self.tau);
    }
}

/// `Stop` as soon as any resource would exceed its budget.
pub fn budget_check(budget: &ResourceBudget, projection: &Projection) -> BudgetDecision {
    let total = projection.total();
    for kind in ResourceKind::ALL {
        if budget.used[kind] + total[kind] > budget.limit(kind) {
            return BudgetDecision::Stop(kind);
        }
    }
    BudgetDecision::Continue
}

#[cfg(test)]
mod tests {
    use super::*;

    fn compute_only(limit: f64, r_g: f64) -> BudgetSpec {
        BudgetSpec {
            limits: BudgetLimits {
                compute: Some(limit),
                ..BudgetLimits::default()
            },
            global_cost: ResourceVec {
                compute: r_g,
                ..ResourceVec::ZERO
            },
        }
    }

    fn rounds_until_stop(budget: &mut ResourceBudget, per_client_round: ResourceVec, cap: usize) -> usize {
        let mut rounds = 0;
        while rounds < cap {
            let projection = budget.project(&[per_client_round]);
            if budget_check(budget, &projection) != BudgetDecision::Continue {
                break;
            }
            budget.commit(projection.round);
            rounds += 1;
        }
        rounds
    }

    #[test]
    fn closed_form_thirteen_rounds() {
        // tau = 5, r_l = 1, r_g = 2, Pi = 100: 7K + 3 <= 100 <=> K <= 13.
        let mut budget = ResourceBudget::new(compute_only(100.0, 2.0), 5).unwrap();
        let usage = ResourceVec { compute: 5.0, ..ResourceVec::ZERO };
        assert_eq!(rounds_until_stop(&mut budget, usage, 1000), 13);
        assert_eq!(budget.aggregations(), 13);
        assert_eq!(budget.local_iterations(), 65);
        assert!(budget.used().compute <= 100.0);
    }

    #[test]
    fn unbounded_budget_never_stops() {
        let mut budget = ResourceBudget::new(BudgetSpec::default(), 3).unwrap();
        let usage = ResourceVec::splat(1e9);
        assert_eq!(rounds_until_stop(&mut budget, usage, 500), 500);
    }

    #[test]
    fn zero_energy_budget_stops_immediately() {
        let spec = BudgetSpec {
            limits: BudgetLimits { energy: Some(0.0), ..BudgetLimits::default() },
            ..BudgetSpec::default()
        };
        let budget = ResourceBudget::new(spec, 1).unwrap();
        let projection = budget.project(&[ResourceVec { energy: 0.5, ..ResourceVec::ZERO }]);
        assert_eq!(budget_check(&budget, &projection), BudgetDecision::Stop(ResourceKind::Energy));
    }

    #[test]
    fn rejects_negative_limits() {
        assert!(ResourceBudget::new(compute_only(-1.0, 0.0), 1).is_err());
        assert!(ResourceBudget::new(compute_only(1.0, 0.0), 0).is_err());
    }
}
