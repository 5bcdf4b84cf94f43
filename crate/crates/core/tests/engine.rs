use fedfair_core::budget::{BudgetLimits, BudgetSpec};
use fedfair_core::client::{ClientReport, HeterogeneitySpec, ResourceVec, StragglerSpec};
use fedfair_core::data::{generate_synthetic, PartitionSpec};
use fedfair_core::engine::{
    run_experiment, Federation, LocalExecutor, LocalJob, RoundStep, Scenario, SerialExecutor, StopReason,
    TrainingConfig,
};
use fedfair_core::selection::PolicyKind;
use fedfair_core::{Error, Result};
use proptest::prelude::*;

fn scenario(seed: u64, population: &HeterogeneitySpec) -> Scenario {
    let ds = generate_synthetic(800, 5, 4, 2.0, seed).unwrap();
    let partition = PartitionSpec::Dirichlet { alpha: 0.5, min_size: 4 };
    Scenario::build(ds, 20, &partition, population, 0.25, seed).unwrap()
}

fn config(seed: u64) -> TrainingConfig {
    TrainingConfig {
        clients_per_round: 5,
        max_rounds: 12,
        eta: 0.5,
        tau: 3,
        batch_size: 16,
        preferred_round_s: 3.0,
        decay: 0.9,
        round_cap: 4,
        normalize_priority: true,
        seed,
        ..TrainingConfig::default()
    }
}

struct Reversed;

impl LocalExecutor for Reversed {
    fn execute(&self, jobs: &[LocalJob<'_>]) -> Vec<Result<ClientReport>> {
        let mut out: Vec<_> = jobs.iter().rev().map(LocalJob::run).collect();
        out.reverse();
        out
    }
}

struct FailLast;

impl LocalExecutor for FailLast {
    fn execute(&self, jobs: &[LocalJob<'_>]) -> Vec<Result<ClientReport>> {
        let mut out: Vec<_> = jobs.iter().map(LocalJob::run).collect();
        *out.last_mut().unwrap() = Err(Error::Empty { what: "simulated dropout" });
        out
    }
}

#[test]
fn reruns_are_identical() {
    let s = scenario(1, &HeterogeneitySpec::default());
    for kind in PolicyKind::ALL {
        let a = run_experiment(&s, &config(7), kind, &BudgetSpec::default(), &SerialExecutor).unwrap();
        let b = run_experiment(&s, &config(7), kind, &BudgetSpec::default(), &SerialExecutor).unwrap();
        assert_eq!(a, b, "{kind}");
        assert_eq!(a.rounds.len(), 12);
        assert_eq!(a.stop_reason, StopReason::MaxRounds);
    }
}

#[test]
fn job_scheduling_does_not_change_results() {
    let s = scenario(2, &HeterogeneitySpec::default());
    let a = run_experiment(&s, &config(3), PolicyKind::FedFair3, &BudgetSpec::default(), &SerialExecutor).unwrap();
    let b = run_experiment(&s, &config(3), PolicyKind::FedFair3, &BudgetSpec::default(), &Reversed).unwrap();
    assert_eq!(a, b);
}

#[test]
fn zero_rounds_leave_the_initial_model() {
    let s = scenario(3, &HeterogeneitySpec::default());
    let cfg = TrainingConfig { max_rounds: 0, ..config(0) };
    let r = run_experiment(&s, &cfg, PolicyKind::Random, &BudgetSpec::default(), &SerialExecutor).unwrap();
    assert!(r.rounds.is_empty());
    assert!(r.final_model.values().iter().all(|&v| v == 0.0));
    assert_eq!(r.sim_clock_s, 0.0);
    assert_eq!(r.resource_usage, ResourceVec::ZERO);
}

#[test]
fn round_bookkeeping_is_consistent() {
    let s = scenario(4, &HeterogeneitySpec::default());
    let cfg = config(5);
    let mut fed = Federation::new(&s, cfg.clone(), PolicyKind::FedFair3, BudgetSpec::default()).unwrap();
    let mut clock = 0.0;
    for k in 1..=cfg.max_rounds {
        let RoundStep::Completed(rec) = fed.run_round(&SerialExecutor).unwrap() else {
            panic!("unbudgeted run stopped");
        };
        assert_eq!(rec.round, k);
        assert_eq!(rec.selected.len(), cfg.clients_per_round);
        let total: u32 = rec.participation_counts.iter().sum();
        assert_eq!(total as usize, k as usize * cfg.clients_per_round);
        let slowest = rec.selected.iter().map(|id| fed.round_times()[id.index()]).fold(0.0, f64::max);
        clock += slowest + 0.1;
        assert!((rec.sim_clock_s - clock).abs() <= 1e-9);
        for i in 0..s.n_clients() {
            let id = fedfair_core::ClientId(i);
            assert_eq!(fed.selection().previously_selected(id), rec.selected.contains(&id));
        }
        assert_eq!(fed.budget().aggregations(), u64::from(k));
        assert_eq!(fed.budget().local_iterations(), u64::from(k) * u64::from(cfg.tau));
    }
}

#[test]
fn failed_round_changes_nothing() {
    let s = scenario(5, &HeterogeneitySpec::default());
    let mut fed = Federation::new(&s, config(1), PolicyKind::FedFair3, BudgetSpec::default()).unwrap();
    fed.run_round(&SerialExecutor).unwrap();
    let (model, sel, budget, clock) = (fed.model().clone(), fed.selection().clone(), fed.budget().clone(), fed.clock_s());
    assert!(fed.run_round(&FailLast).is_err());
    assert_eq!(fed.model(), &model);
    assert_eq!(fed.selection(), &sel);
    assert_eq!(fed.budget(), &budget);
    assert_eq!(fed.clock_s(), clock);

    let mut fresh = Federation::new(&s, config(1), PolicyKind::FedFair3, BudgetSpec::default()).unwrap();
    fresh.run_round(&SerialExecutor).unwrap();
    assert_eq!(fed.run_round(&SerialExecutor).unwrap(), fresh.run_round(&SerialExecutor).unwrap());
}

#[test]
fn update_is_linear_in_eta() {
    let s = scenario(6, &HeterogeneitySpec::default());
    let delta = |eta: f64| {
        let cfg = TrainingConfig { eta, max_rounds: 1, ..config(2) };
        let r = run_experiment(&s, &cfg, PolicyKind::FedFair3, &BudgetSpec::default(), &SerialExecutor).unwrap();
        r.final_model.values().to_vec()
    };
    let (d1, d3) = (delta(0.1), delta(0.3));
    assert!(d1.iter().any(|&v| v != 0.0));
    for (a, b) in d1.iter().zip(&d3) {
        assert!((3.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} {b}");
    }
}

#[test]
fn stopped_federation_refuses_more_rounds() {
    let s = scenario(7, &HeterogeneitySpec::default());
    let spec = BudgetSpec {
        limits: BudgetLimits { time: Some(60.0), ..BudgetLimits::default() },
        ..BudgetSpec::default()
    };
    let mut fed = Federation::new(&s, config(0), PolicyKind::Random, spec).unwrap();
    loop {
        match fed.run_round(&SerialExecutor).unwrap() {
            RoundStep::Completed(_) => continue,
            RoundStep::Stopped(reason) => {
                assert_eq!(reason, StopReason::Budget(fedfair_core::client::ResourceKind::Time));
                break;
            }
        }
    }
    assert!(matches!(fed.run_round(&SerialExecutor), Err(Error::Stopped(_))));
    assert!(fed.budget().used().time <= 60.0);
}

#[test]
fn fedfair3_avoids_stragglers() {
    let population = HeterogeneitySpec {
        stragglers: Some(StragglerSpec { fraction: 0.2, extra_transfer: (30.0, 60.0) }),
        ..HeterogeneitySpec::default()
    };
    let s = scenario(8, &population);
    let cfg = TrainingConfig { max_rounds: 30, preferred_round_s: 10.0, ..config(4) };
    let clock = |kind| run_experiment(&s, &cfg, kind, &BudgetSpec::default(), &SerialExecutor).unwrap().sim_clock_s;
    let (ff, rnd) = (clock(PolicyKind::FedFair3), clock(PolicyKind::Random));
    assert!(ff < rnd, "fedfair3 {ff} vs random {rnd}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn budgets_are_never_exceeded(
        time in 5.0f64..200.0,
        energy in 5.0f64..200.0,
        compute in 100.0f64..5000.0,
        g in 0.0f64..3.0,
        kind in prop::sample::select(PolicyKind::ALL.to_vec()),
        seed in 0u64..1000,
    ) {
        let s = scenario(9, &HeterogeneitySpec::default());
        let spec = BudgetSpec {
            limits: BudgetLimits { time: Some(time), energy: Some(energy), compute: Some(compute) },
            global_cost: ResourceVec::splat(g),
        };
        let cfg = TrainingConfig { max_rounds: 40, ..config(seed) };
        let r = run_experiment(&s, &cfg, kind, &spec, &SerialExecutor).unwrap();
        prop_assert!(r.resource_usage.time <= time);
        prop_assert!(r.resource_usage.energy <= energy);
        prop_assert!(r.resource_usage.compute <= compute);
        if r.rounds.len() < 40 {
            prop_assert!(matches!(r.stop_reason, StopReason::Budget(_)));
        }
    }
}
