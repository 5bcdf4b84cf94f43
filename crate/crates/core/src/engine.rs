//! The aggregator loop.
//!
//! A round scores the population, samples `m` clients, checks the projected
//! cost against the budget, runs the local rounds, aggregates the weighted
//! gradients, and then updates selection state, budget and the simulated
//! clock together. Every fallible step happens before any state changes, so
//! a failed round leaves the federation untouched.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::budget::{budget_check, BudgetDecision, BudgetSpec, ResourceBudget};
use crate::client::{
    round_cost, run_local_round, sample_profiles, ClientProfile, ClientReport, HeterogeneitySpec,
    LocalTraining, ResourceKind, ResourceVec,
};
use crate::data::{ClientShard, LabeledDataset, PartitionSpec};
use crate::metrics::{self, RoundRecord};
use crate::model::{self, ModelParams};
use crate::selection::{
    build_policy, PolicyKind, PolicyParams, PopulationView, SelectionOutcome, SelectionPolicy,
    SelectionState,
};
use crate::seed::{self, stream};
use crate::{math, ClientId, Error, Result};

/// Seconds added to the simulated clock for every aggregation.
pub const AGGREGATION_OVERHEAD_S: f64 = 0.1;

/// Version tag written into serialized [`ExperimentResult`]s.
pub const RESULT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// `w - eta * sum(p_i alpha_i g_i) / sum(p_i alpha_i)`.
    #[default]
    Normalized,
    /// `w - eta * sum(p_i alpha_i g_i)`.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// `T`, preferred round duration in seconds.
    pub preferred_round_s: f64,
    pub beta: f64,
    pub q: f64,
    pub q_large: f64,
    pub eta: f64,
    /// Local SGD steps per round.
    pub tau: u32,
    /// `kappa`, local batch size.
    pub batch_size: usize,
    /// `m`, clients per round.
    pub clients_per_round: usize,
    pub max_rounds: u32,
    pub round_cap: u32,
    pub decay: f64,
    pub normalize_priority: bool,
    pub aggregation: AggregationMode,
    /// Drives selection and local training. Not serialized: callers set it
    /// per run, and results record it alongside the config.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let p = PolicyParams::default();
        Self {
            preferred_round_s: p.preferred_round_s,
            beta: p.beta,
            q: p.q,
            q_large: p.q_large,
            eta: 0.1,
            tau: 5,
            batch_size: 32,
            clients_per_round: 10,
            max_rounds: 100,
            round_cap: p.round_cap,
            decay: p.decay,
            normalize_priority: p.normalize_priority,
            aggregation: AggregationMode::Normalized,
            seed: 0,
        }
    }
}

/// A rejected configuration field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl core::fmt::Display for FieldError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl TrainingConfig {
    pub fn policy_params(&self) -> PolicyParams {
        PolicyParams {
            preferred_round_s: self.preferred_round_s,
            beta: self.beta,
            q: self.q,
            q_large: self.q_large,
            round_cap: self.round_cap,
            decay: self.decay,
            normalize_priority: self.normalize_priority,
        }
    }

    pub fn local_training(&self) -> LocalTraining {
        LocalTraining {
            eta: self.eta,
            tau: self.tau,
            batch_size: self.batch_size,
        }
    }

    /// Every violated constraint, one entry per field.
    pub fn validate(&self) -> Vec<FieldError> {
        let mut errors = Vec::new();
        let mut check = |ok: bool, field: &str, message: &str| {
            if !ok {
                errors.push(FieldError {
                    field: field.to_string(),
                    message: message.to_string(),
                });
            }
        };
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let non_negative = |v: f64| v.is_finite() && v >= 0.0;
        check(positive(self.preferred_round_s), "preferred_round_s", "must be positive");
        check(non_negative(self.beta), "beta", "must be non-negative");
        check(non_negative(self.q), "q", "must be non-negative");
        check(non_negative(self.q_large), "q_large", "must be non-negative");
        check(positive(self.eta), "eta", "must be positive");
        check(self.tau >= 1, "tau", "must be at least 1");
        check(self.batch_size >= 1, "batch_size", "must be at least 1");
        check(self.clients_per_round >= 1, "clients_per_round", "must be at least 1");
        check(self.decay > 0.0 && self.decay <= 1.0, "decay", "must lie in (0, 1]");
        errors
    }

    fn validated(&self) -> Result<()> {
        let errors = self.validate();
        if errors.is_empty() {
            return Ok(());
        }
        let joined: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
        Err(Error::Config(joined.join("; ")))
    }
}

/// A fixed population: dataset, per-client train/test shards and profiles.
/// Policies compared on the same scenario see identical data and devices.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub dataset: LabeledDataset,
    pub train: Vec<ClientShard>,
    pub test: Vec<ClientShard>,
    pub profiles: Vec<ClientProfile>,
    /// Union of all test shards, sorted.
    pub pooled_test: Vec<usize>,
}

impl Scenario {
    /// Partitions `dataset`, holds out `holdout_fraction` of each shard for
    /// per-client evaluation and samples a profile per client from the
    /// training shard sizes.
    pub fn build(
        dataset: LabeledDataset,
        n_clients: usize,
        partition: &PartitionSpec,
        population: &HeterogeneitySpec,
        holdout_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        let shards = partition.clone().with_min_size_at_least(2).apply(
            &dataset,
            n_clients,
            seed::derive(seed, &[stream::PARTITION]),
        )?;
        let mut train = Vec::with_capacity(n_clients);
        let mut test = Vec::with_capacity(n_clients);
        for shard in &shards {
            let split_seed = seed::derive(seed, &[stream::HOLDOUT, shard.owner.0 as u64]);
            let (tr, te) = shard.split_holdout(holdout_fraction, split_seed)?;
            train.push(tr);
            test.push(te);
        }
        let profiles = sample_profiles(
            n_clients,
            population,
            &train,
            seed::derive(seed, &[stream::PROFILES]),
        )?;
        Self::from_parts(dataset, train, test, profiles)
    }

    pub fn from_parts(
        dataset: LabeledDataset,
        train: Vec<ClientShard>,
        test: Vec<ClientShard>,
        profiles: Vec<ClientProfile>,
    ) -> Result<Self> {
        let n = train.len();
        for (what, len) in [("test shards", test.len()), ("profiles", profiles.len())] {
            if len != n {
                return Err(Error::CountMismatch {
                    what,
                    expected: n,
                    found: len,
                });
            }
        }
        if n == 0 {
            return Err(Error::Empty { what: "client population" });
        }
        for (i, ((tr, te), p)) in train.iter().zip(&test).zip(&profiles).enumerate() {
            if tr.owner != ClientId(i) || te.owner != ClientId(i) || p.id != ClientId(i) {
                return Err(Error::invalid("scenario", format!("client {i} is out of order")));
            }
            if tr.is_empty() || te.is_empty() {
                return Err(Error::Empty { what: "client shard" });
            }
            dataset.check_indices(&tr.indices)?;
            dataset.check_indices(&te.indices)?;
            p.validate()?;
            if p.data_size != tr.len() {
                return Err(Error::invalid(
                    "data_size",
                    format!("client {i} profile says {} samples, shard has {}", p.data_size, tr.len()),
                ));
            }
        }
        let mut pooled_test: Vec<usize> = test.iter().flat_map(|s| s.indices.iter().copied()).collect();
        pooled_test.sort_unstable();
        Ok(Self {
            dataset,
            train,
            test,
            profiles,
            pooled_test,
        })
    }

    /// Replaces the sampled profiles, e.g. with ones loaded from a file.
    pub fn with_profiles(self, profiles: Vec<ClientProfile>) -> Result<Self> {
        Self::from_parts(self.dataset, self.train, self.test, profiles)
    }

    pub fn n_clients(&self) -> usize {
        self.train.len()
    }
}

/// One client's local round, ready to run on any thread.
#[derive(Debug, Clone, Copy)]
pub struct LocalJob<'a> {
    pub profile: &'a ClientProfile,
    pub shard: &'a ClientShard,
    pub dataset: &'a LabeledDataset,
    pub model: &'a ModelParams,
    pub training: LocalTraining,
    pub seed: u64,
}

impl LocalJob<'_> {
    pub fn run(&self) -> Result<ClientReport> {
        run_local_round(
            self.profile,
            self.shard,
            self.dataset,
            self.model,
            &self.training,
            self.seed,
        )
    }
}

/// Runs a round's local jobs. Results must come back in job order.
pub trait LocalExecutor {
    fn execute(&self, jobs: &[LocalJob<'_>]) -> Vec<Result<ClientReport>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SerialExecutor;

impl LocalExecutor for SerialExecutor {
    fn execute(&self, jobs: &[LocalJob<'_>]) -> Vec<Result<ClientReport>> {
        jobs.iter().map(LocalJob::run).collect()
    }
}

/// Applies `w - eta * g` with `g = sum_i p_i alpha_i grad_i` over the
/// selected clients' reports, reduced in ascending client id. In
/// [`AggregationMode::Normalized`] `g` is divided by `sum_i p_i alpha_i`; a
/// zero total leaves `w` unchanged.
pub fn aggregate(
    w: &ModelParams,
    reports: &[ClientReport],
    outcome: &SelectionOutcome,
    eta: f64,
    mode: AggregationMode,
) -> Result<ModelParams> {
    let mut ordered: Vec<&ClientReport> = reports.iter().collect();
    ordered.sort_by_key(|r| r.id);
    for pair in ordered.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(Error::DuplicateReport(pair[0].id));
        }
    }
    let mut direction = vec![0.0; w.len()];
    let mut total_weight = 0.0;
    for report in ordered {
        if !outcome.is_selected(report.id) {
            return Err(Error::UnselectedReport(report.id));
        }
        if report.gradient.len() != w.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} gradient entries", w.len()),
                found: format!("{} from client {}", report.gradient.len(), report.id),
            });
        }
        let i = report.id.index();
        let weight = outcome.probabilities[i] * outcome.weights[i];
        total_weight += weight;
        for (d, g) in direction.iter_mut().zip(&report.gradient) {
            *d += weight * g;
        }
    }
    if mode == AggregationMode::Normalized {
        if total_weight <= 0.0 {
            return Ok(w.clone());
        }
        direction.iter_mut().for_each(|d| *d /= total_weight);
    }
    w.descend(eta, &direction)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "resource")]
pub enum StopReason {
    MaxRounds,
    Budget(ResourceKind),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RoundStep {
    Completed(RoundRecord),
    Stopped(StopReason),
}

/// Aggregator state for one run.
pub struct Federation<'a> {
    scenario: &'a Scenario,
    config: TrainingConfig,
    policy: Box<dyn SelectionPolicy>,
    model: ModelParams,
    selection: SelectionState,
    budget: ResourceBudget,
    clock_s: f64,
    stopped: Option<StopReason>,
    round_times: Vec<f64>,
    round_usage: Vec<ResourceVec>,
}

impl<'a> Federation<'a> {
    pub fn new(
        scenario: &'a Scenario,
        config: TrainingConfig,
        policy: PolicyKind,
        budget: BudgetSpec,
    ) -> Result<Self> {
        config.validated()?;
        let training = config.local_training();
        let (round_times, round_usage) = scenario
            .profiles
            .iter()
            .zip(&scenario.train)
            .map(|(p, s)| round_cost(p, s.len(), &training))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        Ok(Self {
            scenario,
            policy: build_policy(policy, &config.policy_params()),
            model: ModelParams::for_dataset(&scenario.dataset),
            selection: SelectionState::new(scenario.n_clients()),
            budget: ResourceBudget::new(budget, config.tau)?,
            config,
            clock_s: 0.0,
            stopped: None,
            round_times,
            round_usage,
        })
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn selection(&self) -> &SelectionState {
        &self.selection
    }

    pub fn budget(&self) -> &ResourceBudget {
        &self.budget
    }

    pub fn clock_s(&self) -> f64 {
        self.clock_s
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stopped
    }

    pub fn policy_kind(&self) -> PolicyKind {
        self.policy.kind()
    }

    /// Projected `t_i` of every client.
    pub fn round_times(&self) -> &[f64] {
        &self.round_times
    }

    pub fn run_round(&mut self, executor: &dyn LocalExecutor) -> Result<RoundStep> {
        if let Some(StopReason::Budget(kind)) = self.stopped {
            return Err(Error::Stopped(kind));
        }
        let round = self.selection.completed_rounds() + 1;
        let base_seed = self.config.seed;
        let scenario = self.scenario;

        let view = PopulationView {
            profiles: &scenario.profiles,
            round_times: &self.round_times,
            state: &self.selection,
        };
        let outcome = self.policy.select(
            &view,
            self.config.clients_per_round,
            seed::derive(base_seed, &[stream::SELECTION, u64::from(round)]),
        )?;

        let usage: Vec<ResourceVec> = outcome
            .selected
            .iter()
            .map(|id| self.round_usage[id.index()])
            .collect();
        let projection = self.budget.project(&usage);
        if let BudgetDecision::Stop(kind) = budget_check(&self.budget, &projection) {
            let reason = StopReason::Budget(kind);
            self.stopped = Some(reason);
            return Ok(RoundStep::Stopped(reason));
        }

        let training = self.config.local_training();
        let jobs: Vec<LocalJob<'_>> = outcome
            .selected
            .iter()
            .map(|id| LocalJob {
                profile: &scenario.profiles[id.index()],
                shard: &scenario.train[id.index()],
                dataset: &scenario.dataset,
                model: &self.model,
                training,
                seed: seed::derive(base_seed, &[stream::LOCAL_TRAINING, u64::from(round), id.0 as u64]),
            })
            .collect();
        let mut reports = executor.execute(&jobs).into_iter().collect::<Result<Vec<_>>>()?;
        reports.sort_by_key(|r| r.id);

        let model = aggregate(
            &self.model,
            &reports,
            &outcome,
            self.config.eta,
            self.config.aggregation,
        )?;

        let participants: Vec<(ClientId, Vec<f64>)> =
            reports.iter().map(|r| (r.id, r.batch_losses.clone())).collect();
        let mut selection = self.selection.clone();
        selection.record_round(&participants)?;

        let mut spent = self.budget.spec().global_cost;
        for r in &reports {
            spent += r.usage;
        }
        let mut budget = self.budget.clone();
        budget.commit(spent);

        let slowest = reports.iter().map(|r| r.elapsed_s).fold(0.0, f64::max);
        let clock_s = self.clock_s + slowest + AGGREGATION_OVERHEAD_S;

        let evaluation = evaluate(scenario, &model)?;
        let batch_losses: Vec<f64> = reports.iter().flat_map(|r| r.batch_losses.iter().copied()).collect();
        let record = RoundRecord {
            round,
            policy: self.policy.kind().name().to_string(),
            seed: base_seed,
            global_accuracy: evaluation.global_accuracy,
            accuracy_variance: evaluation.accuracy_variance,
            cosine_uniformity: evaluation.cosine_uniformity,
            per_client_accuracy: evaluation.per_client_accuracy,
            jain_participation: metrics::participation_fairness(selection.participation_counts())?,
            participation_counts: selection.participation_counts().to_vec(),
            sim_clock_s: clock_s,
            selected: outcome.selected,
            mean_batch_loss: math::mean(&batch_losses),
        };

        self.model = model;
        self.selection = selection;
        self.budget = budget;
        self.clock_s = clock_s;
        Ok(RoundStep::Completed(record))
    }
}

struct Evaluation {
    global_accuracy: f64,
    per_client_accuracy: Vec<f64>,
    accuracy_variance: f64,
    cosine_uniformity: Option<f64>,
}

fn evaluate(scenario: &Scenario, w: &ModelParams) -> Result<Evaluation> {
    let per_client_accuracy = metrics::accuracy_per_client(w, &scenario.test, &scenario.dataset)?;
    Ok(Evaluation {
        global_accuracy: model::accuracy(w, &scenario.dataset, &scenario.pooled_test)?,
        accuracy_variance: metrics::variance_uniformity(&per_client_accuracy)?,
        cosine_uniformity: metrics::cosine_uniformity(&per_client_accuracy).ok(),
        per_client_accuracy,
    })
}

/// Full record of one (policy, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    /// Display label; the policy name unless a caller renames the run.
    pub label: String,
    pub policy: PolicyKind,
    pub seed: u64,
    pub config: TrainingConfig,
    pub budget: BudgetSpec,
    pub stop_reason: StopReason,
    pub rounds: Vec<RoundRecord>,
    pub final_model: ModelParams,
    pub final_global_accuracy: f64,
    pub final_client_accuracy: Vec<f64>,
    pub final_accuracy_variance: f64,
    pub resource_usage: ResourceVec,
    pub sim_clock_s: f64,
}

impl ExperimentResult {
    /// Renames the run and every round record.
    pub fn relabel(&mut self, label: impl Into<String>) {
        self.label = label.into();
        for r in &mut self.rounds {
            r.policy.clone_from(&self.label);
        }
    }
}

/// Runs until the budget stops the federation or `max_rounds` complete.
/// The config's seed drives selection and local training; the scenario is
/// fixed by the caller.
pub fn run_experiment(
    scenario: &Scenario,
    config: &TrainingConfig,
    policy: PolicyKind,
    budget: &BudgetSpec,
    executor: &dyn LocalExecutor,
) -> Result<ExperimentResult> {
    let mut federation = Federation::new(scenario, config.clone(), policy, budget.clone())?;
    let mut rounds = Vec::new();
    let mut stop_reason = StopReason::MaxRounds;
    while rounds.len() < config.max_rounds as usize {
        match federation.run_round(executor)? {
            RoundStep::Completed(record) => rounds.push(record),
            RoundStep::Stopped(reason) => {
                stop_reason = reason;
                break;
            }
        }
    }
    let evaluation = evaluate(scenario, federation.model())?;
    Ok(ExperimentResult {
        schema_version: RESULT_SCHEMA_VERSION,
        label: policy.name().to_string(),
        policy,
        seed: config.seed,
        config: config.clone(),
        budget: budget.clone(),
        stop_reason,
        rounds,
        final_model: federation.model().clone(),
        final_global_accuracy: evaluation.global_accuracy,
        final_client_accuracy: evaluation.per_client_accuracy,
        final_accuracy_variance: evaluation.accuracy_variance,
        resource_usage: federation.budget().used(),
        sim_clock_s: federation.clock_s(),
    })
}
