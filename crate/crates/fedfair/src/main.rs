use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use fedfair::config::{self, RunConfig};
use fedfair::runner::{self, Cell};
use fedfair_core::selection::PolicyKind;

/// Federated client-selection simulator.
#[derive(Parser)]
#[command(version, about, after_help = "Output goes to --out, else the config's out_dir, else $FEDFAIR_OUT_DIR, else ./fedfair-out.\nPreset IDX files are read from $FEDFAIR_DATA_DIR (default ./data).")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file, or the name of a preset.
    #[arg(long, short)]
    config: String,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds, overriding the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Number of (policy, seed) cells to run concurrently.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Warn about unknown config keys instead of rejecting them.
    #[arg(long)]
    lenient: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one policy over the configured seeds.
    Run {
        #[command(flatten)]
        common: Common,
        /// Policy name; defaults to the config's first policy.
        #[arg(long)]
        policy: Option<String>,
    },
    /// Run several policies on identical scenarios.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated policies; defaults to the config's list.
        #[arg(long, value_delimiter = ',')]
        policy: Option<Vec<String>>,
    },
    /// Vary one training parameter, holding everything else fixed.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter to vary: q, q_large, beta, preferred_round_s, eta, tau,
        /// batch_size, clients_per_round, round_cap or decay.
        #[arg(long)]
        param: String,
        /// Comma-separated values for the parameter.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Comma-separated policies; defaults to the config's list.
        #[arg(long, value_delimiter = ',')]
        policy: Option<Vec<String>>,
    },
    /// List the built-in presets.
    Presets,
}

fn policies(names: Option<Vec<String>>, cfg: &RunConfig) -> anyhow::Result<Vec<PolicyKind>> {
    match names {
        None => Ok(cfg.policies.clone()),
        Some(names) => names
            .iter()
            .map(|n| n.parse::<PolicyKind>().map_err(|_| fedfair::Error::UnknownPolicy(n.clone()).into()))
            .collect(),
    }
}

fn load(common: &Common) -> anyhow::Result<RunConfig> {
    let loaded = config::load(&common.config, common.lenient)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let mut cfg = loaded.config;
    if let Some(seeds) = &common.seeds {
        cfg.seeds.clone_from(seeds);
        let problems = config::validate(&cfg);
        if !problems.is_empty() {
            return Err(fedfair::Error::Invalid(problems).into());
        }
    }
    Ok(cfg)
}

fn execute(common: &Common, cfg: &RunConfig, cells: Vec<Cell>) -> anyhow::Result<()> {
    if common.parallel == 0 {
        bail!("--parallel must be at least 1");
    }
    let out_dir = runner::resolve_out_dir(common.out.as_deref(), cfg);
    let outcome = runner::execute(cfg, &cells, common.parallel, &out_dir)
        .with_context(|| format!("running into {}", out_dir.display()))?;
    let summary = fedfair::report::summarize(&outcome.results)?;
    for p in &summary.policies {
        let pm = |s: &fedfair::report::Stat| match s.std {
            Some(sd) => format!("{:.4} ± {:.4}", s.mean, sd),
            None => format!("{:.4}", s.mean),
        };
        println!(
            "{:<24} acc {}  var {}  clock {}",
            p.label,
            pm(&p.global_accuracy),
            pm(&p.accuracy_variance),
            pm(&p.sim_clock_s)
        );
    }
    println!("wrote {}", outcome.out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { common, policy } => {
            let cfg = load(&common)?;
            let policy = policies(policy.map(|p| vec![p]), &cfg)?.first().copied();
            execute(&common, &cfg, runner::plan_run(&cfg, policy))
        }
        Command::Compare { common, policy } => {
            let cfg = load(&common)?;
            let list = policies(policy, &cfg)?;
            execute(&common, &cfg, runner::plan_compare(&cfg, &list))
        }
        Command::Sweep {
            common,
            param,
            values,
            policy,
        } => {
            let cfg = load(&common)?;
            let list = policies(policy, &cfg)?;
            let cells = runner::plan_sweep(&cfg, &list, &param, &values)?;
            execute(&common, &cfg, cells)
        }
        Command::Presets => {
            for (name, doc) in config::PRESETS {
                println!("{name:<18} {doc}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
