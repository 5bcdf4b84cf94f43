//! Run configuration: TOML files, named presets and validation.
//!
//! A config file may name a `preset`; its own keys are then merged over the
//! preset's fully resolved config. Unknown keys are rejected unless the
//! caller asks for lenient parsing, in which case they are returned as
//! warnings.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fedfair_core::budget::BudgetSpec;
use fedfair_core::client::{HeterogeneitySpec, StragglerSpec};
use fedfair_core::data::PartitionSpec;
use fedfair_core::engine::TrainingConfig;
use fedfair_core::selection::PolicyKind;

use crate::error::{Error, Result};

/// Environment variable naming the directory that holds `mnist/` and
/// `fmnist/` IDX files for the presets. Defaults to `./data`.
pub const DATA_DIR_ENV: &str = "FEDFAIR_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Gaussian blobs; the sample seed is derived from each run seed.
    Synthetic {
        samples: usize,
        features: usize,
        classes: usize,
        separation: f64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        /// Keep only the first `limit` samples.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limit: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationSpec {
    pub clients: usize,
    /// Fraction of each client's shard held out for per-client accuracy.
    pub holdout: f64,
    pub heterogeneity: HeterogeneitySpec,
    /// JSON array of profiles replacing the sampled ones.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profiles: Option<PathBuf>,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            clients: 100,
            holdout: 0.2,
            heterogeneity: HeterogeneitySpec::default(),
            profiles: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Base preset; cleared once the config is resolved.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub policies: Vec<PolicyKind>,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub dataset: DatasetSpec,
    pub partition: PartitionSpec,
    pub population: PopulationSpec,
    pub training: TrainingConfig,
    pub budget: BudgetSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            policies: vec![PolicyKind::FedFair3],
            seeds: vec![0],
            out_dir: None,
            dataset: DatasetSpec::Synthetic {
                samples: 10_000,
                features: 20,
                classes: 10,
                separation: 3.0,
            },
            partition: PartitionSpec::Iid,
            population: PopulationSpec::default(),
            training: TrainingConfig::default(),
            budget: BudgetSpec::default(),
        }
    }
}

/// Named presets and one-line descriptions.
///
/// The image presets keep the client counts, rounds, batch sizes and `q` of
/// the published MNIST / FashionMNIST setups but train multinomial logistic
/// regression instead of a convolutional network, so absolute accuracies
/// are lower than convolutional baselines.
pub const PRESETS: &[(&str, &str)] = &[
    ("mnist-iid", "MNIST IDX files, IID, 100 clients, 10/round, 100 rounds, batch 100, q=2"),
    ("mnist-noniid", "as mnist-iid with Dirichlet(0.3) label skew"),
    ("fmnist-iid", "FashionMNIST IDX files, IID, 100 clients, 6/round, 100 rounds, batch 100, q=2"),
    ("fmnist-noniid", "as fmnist-iid with Dirichlet(0.3) label skew"),
    ("synthetic-iid", "Gaussian blobs, IID, 300 clients, 20/round, 150 rounds, batch 64, q=1"),
    ("synthetic-noniid", "as synthetic-iid with Dirichlet(0.3) label skew"),
    ("straggler", "Gaussian blobs, 100 clients, 20% of them slowed past 3T by extra transfer time"),
];

fn data_dir() -> PathBuf {
    let dir = std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from("data"), PathBuf::from);
    std::path::absolute(&dir).unwrap_or(dir)
}

fn idx_dataset(name: &str) -> DatasetSpec {
    let (images, labels) = crate::idx::default_paths(&data_dir().join(name));
    DatasetSpec::Idx {
        images,
        labels,
        limit: None,
    }
}

fn image_preset(name: &str, clients_per_round: usize, partition: PartitionSpec) -> RunConfig {
    RunConfig {
        policies: PolicyKind::ALL.to_vec(),
        seeds: vec![0, 1, 2],
        dataset: idx_dataset(name),
        partition,
        population: PopulationSpec {
            clients: 100,
            ..PopulationSpec::default()
        },
        training: TrainingConfig {
            clients_per_round,
            max_rounds: 100,
            batch_size: 100,
            q: 2.0,
            eta: 0.5,
            preferred_round_s: 10.0,
            round_cap: 10,
            decay: 0.9,
            normalize_priority: true,
            ..TrainingConfig::default()
        },
        ..RunConfig::default()
    }
}

fn synthetic_preset(partition: PartitionSpec) -> RunConfig {
    RunConfig {
        policies: PolicyKind::ALL.to_vec(),
        seeds: vec![0, 1, 2, 3, 4],
        dataset: DatasetSpec::Synthetic {
            samples: 90_000,
            features: 20,
            classes: 10,
            separation: 5.0,
        },
        partition,
        population: PopulationSpec {
            clients: 300,
            ..PopulationSpec::default()
        },
        training: TrainingConfig {
            clients_per_round: 20,
            max_rounds: 150,
            batch_size: 64,
            q: 1.0,
            eta: 0.3,
            preferred_round_s: 10.0,
            round_cap: 10,
            decay: 0.9,
            normalize_priority: true,
            ..TrainingConfig::default()
        },
        ..RunConfig::default()
    }
}

const NON_IID: PartitionSpec = PartitionSpec::Dirichlet {
    alpha: 0.3,
    min_size: 2,
};

pub fn preset(name: &str) -> Result<RunConfig> {
    let cfg = match name {
        "mnist-iid" => image_preset("mnist", 10, PartitionSpec::Iid),
        "mnist-noniid" => image_preset("mnist", 10, NON_IID),
        "fmnist-iid" => image_preset("fmnist", 6, PartitionSpec::Iid),
        "fmnist-noniid" => image_preset("fmnist", 6, NON_IID),
        "synthetic-iid" => synthetic_preset(PartitionSpec::Iid),
        "synthetic-noniid" => synthetic_preset(NON_IID),
        "straggler" => {
            let base = synthetic_preset(PartitionSpec::Dirichlet {
                alpha: 0.5,
                min_size: 2,
            });
            RunConfig {
                dataset: DatasetSpec::Synthetic {
                    samples: 30_000,
                    features: 20,
                    classes: 10,
                    separation: 5.0,
                },
                population: PopulationSpec {
                    clients: 100,
                    heterogeneity: HeterogeneitySpec {
                        stragglers: Some(StragglerSpec {
                            fraction: 0.2,
                            extra_transfer: (30.0, 60.0),
                        }),
                        ..HeterogeneitySpec::default()
                    },
                    ..PopulationSpec::default()
                },
                training: TrainingConfig {
                    clients_per_round: 10,
                    max_rounds: 100,
                    round_cap: 5,
                    decay: 0.5,
                    ..base.training.clone()
                },
                ..base
            }
        }
        _ => return Err(Error::UnknownPreset(name.to_string())),
    };
    Ok(RunConfig {
        preset: None,
        ..cfg
    })
}

/// A parsed config plus the unknown keys tolerated in lenient mode.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub warnings: Vec<String>,
}

/// Deep-merges `over` into `base`. A table whose `kind` differs from the
/// base's replaces it wholesale, so switching variants leaves no stale keys.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if b.get("kind") == o.get("kind") || o.get("kind").is_none() => {
                merge(b, o)
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn to_table(cfg: &RunConfig) -> Result<toml::Table> {
    toml::Table::try_from(cfg).map_err(|e| Error::Serialize(e.to_string()))
}

/// Parses config text. Unknown keys are errors unless `lenient`, which
/// returns them as warnings. Relative paths in the text resolve against `base_dir`.
pub fn parse_str(text: &str, origin: &Path, base_dir: &Path, lenient: bool) -> Result<Loaded> {
    let parse_err = |message: String| Error::Parse {
        path: origin.to_path_buf(),
        message,
    };
    let mut user: toml::Table = text.parse().map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
    rebase_paths(&mut user, base_dir);

    let mut merged = match user.remove("preset") {
        Some(toml::Value::String(name)) => to_table(&preset(&name)?)?,
        Some(other) => return Err(parse_err(format!("preset: expected a string, found {}", other.type_str()))),
        None => toml::Table::new(),
    };
    let user_keys = user.clone();
    merge(&mut merged, user);

    let config: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(merged))
        .map_err(|e| parse_err(format!("{}: {}", e.path(), e.inner())))?;

    let mut unknown = Vec::new();
    unknown_keys(&user_keys, &to_table(&config)?, "", &mut unknown);
    if !unknown.is_empty() && !lenient {
        return Err(Error::Invalid(unknown));
    }
    let problems = validate(&config);
    if !problems.is_empty() {
        return Err(Error::Invalid(problems));
    }
    Ok(Loaded {
        config,
        warnings: unknown,
    })
}

/// Loads `source`, which is either a config file or a preset name.
pub fn load(source: &str, lenient: bool) -> Result<Loaded> {
    let path = Path::new(source);
    if !path.exists() && PRESETS.iter().any(|(name, _)| *name == source) {
        let config = preset(source)?;
        let problems = validate(&config);
        if !problems.is_empty() {
            return Err(Error::Invalid(problems));
        }
        return Ok(Loaded {
            config,
            warnings: Vec::new(),
        });
    }
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base_dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    parse_str(&text, path, &base_dir, lenient)
}

/// Keys of `given` that did not survive a round trip through [`RunConfig`].
fn unknown_keys(given: &toml::Table, known: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (key, value) in given {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (known.get(key), value) {
            (None, _) => out.push(format!("{path}: unknown key")),
            (Some(toml::Value::Table(k)), toml::Value::Table(g)) => unknown_keys(g, k, &path, out),
            _ => {}
        }
    }
}

fn rebase_paths(user: &mut toml::Table, base_dir: &Path) {
    let rebase = |v: &mut toml::Value| {
        if let toml::Value::String(s) = v {
            let p = Path::new(s.as_str());
            if p.is_relative() {
                *s = base_dir.join(p).to_string_lossy().into_owned();
            }
        }
    };
    if let Some(toml::Value::Table(ds)) = user.get_mut("dataset") {
        for key in ["images", "labels"] {
            if let Some(v) = ds.get_mut(key) {
                rebase(v);
            }
        }
    }
    if let Some(toml::Value::Table(pop)) = user.get_mut("population") {
        if let Some(v) = pop.get_mut("profiles") {
            rebase(v);
        }
    }
}

/// Every constraint violation, prefixed with its key path.
pub fn validate(cfg: &RunConfig) -> Vec<String> {
    let mut out = Vec::new();
    let mut push = |path: &str, msg: &str| out.push(format!("{path}: {msg}"));

    if cfg.policies.is_empty() {
        push("policies", "at least one policy is required");
    }
    if cfg.seeds.is_empty() {
        push("seeds", "at least one seed is required");
    }
    if cfg.seeds.iter().collect::<BTreeSet<_>>().len() != cfg.seeds.len() {
        push("seeds", "seeds must be distinct");
    }
    match &cfg.dataset {
        DatasetSpec::Synthetic {
            samples,
            features,
            classes,
            separation,
        } => {
            if *classes < 2 {
                push("dataset.classes", "need at least 2 classes");
            }
            if *features == 0 {
                push("dataset.features", "need at least 1 feature");
            }
            if *samples < *classes {
                push("dataset.samples", "need at least one sample per class");
            }
            if !(separation.is_finite() && *separation >= 0.0) {
                push("dataset.separation", "must be finite and non-negative");
            }
        }
        DatasetSpec::Idx { images, labels, limit } => {
            for (key, p) in [("dataset.images", images), ("dataset.labels", labels)] {
                if !p.is_file() {
                    out.push(format!("{key}: file {} does not exist", p.display()));
                }
            }
            if *limit == Some(0) {
                out.push("dataset.limit: must be positive".into());
            }
        }
    }
    let mut push = |path: &str, msg: &str| out.push(format!("{path}: {msg}"));
    match cfg.partition {
        PartitionSpec::Dirichlet { alpha, .. } if !(alpha.is_finite() && alpha > 0.0) => {
            push("partition.alpha", "must be positive")
        }
        PartitionSpec::LabelShard { shards_per_client: 0 } => push("partition.shards_per_client", "must be positive"),
        _ => {}
    }
    let pop = &cfg.population;
    if pop.clients == 0 {
        push("population.clients", "must be positive");
    }
    if !(pop.holdout > 0.0 && pop.holdout < 1.0) {
        push("population.holdout", "must lie in (0, 1)");
    }
    if let Err(e) = pop.heterogeneity.validate() {
        push("population.heterogeneity", &e.to_string());
    }
    if let Some(p) = &pop.profiles {
        if !p.is_file() {
            push("population.profiles", &format!("file {} does not exist", p.display()));
        }
    }
    for e in cfg.training.validate() {
        push(&format!("training.{}", e.field), &e.message);
    }
    if let Err(e) = cfg.budget.validate() {
        push("budget", &e.to_string());
    }
    out
}

/// The resolved config as TOML; parsing it back yields the same config.
pub fn dump(cfg: &RunConfig) -> Result<String> {
    let resolved = RunConfig {
        preset: None,
        ..cfg.clone()
    };
    toml::to_string_pretty(&resolved).map_err(|e| Error::Serialize(e.to_string()))
}

/// Hyperparameters `sweep` can vary.
pub const SWEEP_PARAMETERS: &[&str] = &[
    "q",
    "q_large",
    "beta",
    "preferred_round_s",
    "eta",
    "tau",
    "batch_size",
    "clients_per_round",
    "round_cap",
    "decay",
];

/// Sets one training hyperparameter by name.
pub fn set_parameter(training: &mut TrainingConfig, name: &str, value: f64) -> Result<()> {
    let count = |v: f64| -> Result<u64> {
        if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
            Ok(v as u64)
        } else {
            Err(Error::Invalid(vec![format!("training.{name}: {v} is not a whole number")]))
        }
    };
    match name {
        "q" => training.q = value,
        "q_large" => training.q_large = value,
        "beta" => training.beta = value,
        "preferred_round_s" | "T" => training.preferred_round_s = value,
        "eta" => training.eta = value,
        "tau" => training.tau = count(value)? as u32,
        "batch_size" => training.batch_size = count(value)? as usize,
        "clients_per_round" => training.clients_per_round = count(value)? as usize,
        "round_cap" => training.round_cap = count(value)? as u32,
        "decay" => training.decay = value,
        _ => return Err(Error::UnknownParameter(name.to_string())),
    }
    Ok(())
}
