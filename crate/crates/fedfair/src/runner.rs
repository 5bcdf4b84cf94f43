//! `run`, `compare` and `sweep`: expand a config into (label, policy, seed)
//! cells, run them, and write per-cell files plus the merged reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use fedfair_core::client::{ClientProfile, ClientReport};
use fedfair_core::data::{generate_synthetic, LabeledDataset};
use fedfair_core::engine::{run_experiment, ExperimentResult, LocalExecutor, LocalJob, Scenario, SerialExecutor, TrainingConfig};
use fedfair_core::seed::{self, stream};
use fedfair_core::selection::PolicyKind;

use crate::config::{self, DatasetSpec, RunConfig};
use crate::error::{Error, Result};
use crate::report::{self, ReportFiles};
use crate::{checkpoint, idx};

/// Environment variable giving the default output directory.
pub const OUT_DIR_ENV: &str = "FEDFAIR_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "fedfair-out";

/// Runs a round's local jobs on the rayon pool. Reports come back in job
/// order, so results match [`SerialExecutor`] exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayonExecutor;

impl LocalExecutor for RayonExecutor {
    fn execute(&self, jobs: &[LocalJob<'_>]) -> Vec<fedfair_core::Result<ClientReport>> {
        jobs.par_iter().map(LocalJob::run).collect()
    }
}

/// One experiment of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub label: String,
    pub policy: PolicyKind,
    pub training: TrainingConfig,
    pub seed: u64,
}

fn cell(label: String, policy: PolicyKind, training: TrainingConfig, seed: u64) -> Cell {
    Cell {
        label,
        policy,
        training: TrainingConfig { seed, ..training },
        seed,
    }
}

/// One policy (the given one, else the config's first) over every seed.
pub fn plan_run(cfg: &RunConfig, policy: Option<PolicyKind>) -> Vec<Cell> {
    let policy = policy.unwrap_or(cfg.policies[0]);
    cfg.seeds
        .iter()
        .map(|&s| cell(policy.name().into(), policy, cfg.training.clone(), s))
        .collect()
}

/// Every listed policy over every seed.
pub fn plan_compare(cfg: &RunConfig, policies: &[PolicyKind]) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &p in policies {
        for &s in &cfg.seeds {
            cells.push(cell(p.name().into(), p, cfg.training.clone(), s));
        }
    }
    cells
}

/// Varies one training parameter across `values` for each policy.
pub fn plan_sweep(cfg: &RunConfig, policies: &[PolicyKind], parameter: &str, values: &[f64]) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    for &v in values {
        let mut training = cfg.training.clone();
        config::set_parameter(&mut training, parameter, v)?;
        let problems: Vec<String> = training.validate().iter().map(|e| format!("training.{e}")).collect();
        if !problems.is_empty() {
            return Err(Error::Invalid(problems));
        }
        for &p in policies {
            for &s in &cfg.seeds {
                cells.push(cell(format!("{}[{parameter}={v}]", p.name()), p, training.clone(), s));
            }
        }
    }
    Ok(cells)
}

/// Builds the dataset once for file-backed specs; synthetic data is drawn
/// per seed.
enum DataSource {
    Fixed(LabeledDataset),
    Synthetic { samples: usize, features: usize, classes: usize, separation: f64 },
}

impl DataSource {
    fn new(spec: &DatasetSpec) -> Result<Self> {
        Ok(match spec {
            DatasetSpec::Idx { images, labels, limit } => Self::Fixed(idx::load_idx(images, labels, *limit)?),
            &DatasetSpec::Synthetic {
                samples,
                features,
                classes,
                separation,
            } => Self::Synthetic {
                samples,
                features,
                classes,
                separation,
            },
        })
    }

    fn for_seed(&self, seed: u64) -> Result<LabeledDataset> {
        Ok(match self {
            Self::Fixed(ds) => ds.clone(),
            &Self::Synthetic {
                samples,
                features,
                classes,
                separation,
            } => generate_synthetic(samples, features, classes, separation, seed::derive(seed, &[stream::DATASET]))?,
        })
    }
}

fn read_profiles(path: &Path) -> Result<Vec<ClientProfile>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// The scenario every policy sees for `seed`.
pub fn build_scenario(cfg: &RunConfig, seed: u64) -> Result<Scenario> {
    build_with(&DataSource::new(&cfg.dataset)?, cfg, seed)
}

fn build_with(source: &DataSource, cfg: &RunConfig, seed: u64) -> Result<Scenario> {
    let pop = &cfg.population;
    let scenario = Scenario::build(
        source.for_seed(seed)?,
        pop.clients,
        &cfg.partition,
        &pop.heterogeneity,
        pop.holdout,
        seed,
    )?;
    Ok(match &pop.profiles {
        Some(path) => scenario.with_profiles(read_profiles(path)?)?,
        None => scenario,
    })
}

/// Output directory: explicit flag, then the config, then the environment,
/// then [`DEFAULT_OUT_DIR`].
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn file_stem(label: &str, seed: u64) -> String {
    let clean: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    format!("{clean}_seed{seed}")
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Everything a finished invocation produced.
#[derive(Debug)]
pub struct Outcome {
    pub results: Vec<ExperimentResult>,
    pub reports: ReportFiles,
    pub out_dir: PathBuf,
}

/// Runs `cells` with up to `parallel` concurrent cells and writes:
/// `config.resolved.toml`, `scenarios/seed<S>/{shards,profiles}.json`,
/// `runs/<label>_seed<S>.{json,ckpt}` and the merged reports.
pub fn execute(cfg: &RunConfig, cells: &[Cell], parallel: usize, out_dir: &Path) -> Result<Outcome> {
    create_dir(&out_dir.join("runs"))?;
    fs::write(out_dir.join("config.resolved.toml"), config::dump(cfg)?).map_err(|source| Error::Io {
        path: out_dir.join("config.resolved.toml"),
        source,
    })?;

    let source = DataSource::new(&cfg.dataset)?;
    let mut scenarios = BTreeMap::new();
    for c in cells {
        if !scenarios.contains_key(&c.seed) {
            let scenario = build_with(&source, cfg, c.seed)?;
            let dir = out_dir.join("scenarios").join(format!("seed{}", c.seed));
            create_dir(&dir)?;
            let shards: Vec<&[usize]> = scenario.train.iter().map(|s| s.indices.as_slice()).collect();
            write_json(&dir.join("shards.json"), &shards)?;
            write_json(&dir.join("profiles.json"), &scenario.profiles)?;
            scenarios.insert(c.seed, scenario);
        }
    }

    let run_cell = |c: &Cell| -> Result<ExperimentResult> {
        let scenario = &scenarios[&c.seed];
        let mut result = run_experiment(scenario, &c.training, c.policy, &cfg.budget, &SerialExecutor)?;
        result.relabel(c.label.clone());
        let stem = out_dir.join("runs").join(file_stem(&c.label, c.seed));
        write_json(&stem.with_extension("json"), &result)?;
        checkpoint::save(&stem.with_extension("ckpt"), &result.final_model)?;
        Ok(result)
    };
    let results: Vec<ExperimentResult> = if parallel > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| Error::Serialize(e.to_string()))?;
        pool.install(|| cells.par_iter().map(run_cell).collect::<Result<_>>())?
    } else {
        cells.iter().map(run_cell).collect::<Result<_>>()?
    };

    let reports = report::emit_reports(&results, out_dir)?;
    Ok(Outcome {
        results,
        reports,
        out_dir: out_dir.to_path_buf(),
    })
}
