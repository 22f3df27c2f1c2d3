//! Command-line front end: experiment presets, configuration, CSV output and
//! the table builder.

mod config;
mod csv;
mod presets;
mod verify;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{
    parse_arm, parse_prior, ConfigError, Experiment, ExperimentConfig, FamilySpec, Layer, KEYS,
};
pub use csv::{Table, DIAGNOSTICS_HEADER, INTERVALS_HEADER, REGRET_HEADER, REGULARIZER_HEADER};
pub use presets::{
    load_table, regret_summaries, resolve_policies, run_preset, table_path, Outputs,
};
pub use verify::{run_checks, Check};

use crate::benefit_table::{BenefitTable, TableError};
use crate::policies::PolicyError;
use crate::posterior::{ArmBelief, PosteriorError};
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("no benefit table for m_bar {m_bar} at {path}; build it with `bandit-lab dp-build --m-bar {m_bar}`")]
    MissingTable { path: String, m_bar: u32 },
    #[error("unknown policy `{0}` (expected ts, ts_lambda_<l>, r2, r2_m<M>, fix, ucb or greedy)")]
    UnknownPolicy(String),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("cannot configure threads: {0}")]
    Threads(String),
    #[error("{0} invariant check(s) failed")]
    VerifyFailed(usize),
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

const ENV_HELP: &str = "\
Every flag can also be set through an environment variable named
BANDIT_LAB_<FLAG>, e.g. BANDIT_LAB_SEED=7 or BANDIT_LAB_TABLE=cache.
Settings apply in increasing priority: preset defaults, config file,
environment, command-line flags.

Config files hold one `key = value` per line with keys experiment, prior,
family, theta, horizon, trials, seed, m_bar, policies and out. Priors are
written like N(0,1)xPoint(0) or Beta(5,4)xBeta(500,500); families are
bernoulli or gaussian:<reward variance>.";

#[derive(Debug, Parser)]
#[command(name = "bandit-lab", version, about = "Two-armed Bayesian bandit experiments", after_help = ENV_HELP)]
pub struct Cli {
    /// Worker threads for trials and table builds [default: all cores]
    #[arg(long, global = true, env = "BANDIT_LAB_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write its CSV files
    Run(RunArgs),
    /// Build benefit tables for the Bernoulli squared-regret policy
    DpBuild(DpBuildArgs),
    /// Run the invariant suite
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// fig1_left, fig1_right, fig_ucb, fig_ts_overlap, fig_cov, fig_ber_left,
    /// fig_ber_right, fig_fix_left, fig_fix_right or custom
    pub experiment: Option<String>,
    /// key = value config file
    #[arg(long, env = "BANDIT_LAB_CONFIG")]
    pub config: Option<PathBuf>,
    /// Master seed
    #[arg(long, env = "BANDIT_LAB_SEED")]
    pub seed: Option<u64>,
    /// Monte Carlo trials per policy
    #[arg(long, env = "BANDIT_LAB_TRIALS")]
    pub trials: Option<usize>,
    /// Rounds per trial
    #[arg(long, env = "BANDIT_LAB_HORIZON")]
    pub horizon: Option<usize>,
    /// Output directory for CSV files [default: results]
    #[arg(long, env = "BANDIT_LAB_OUT")]
    pub out: Option<PathBuf>,
    /// Directory holding benefit tables
    #[arg(long, env = "BANDIT_LAB_TABLE", default_value = "tables")]
    pub table: PathBuf,
}

#[derive(Debug, Args)]
pub struct DpBuildArgs {
    /// key = value config file; its prior and m_bar keys are used
    #[arg(long, env = "BANDIT_LAB_CONFIG")]
    pub config: Option<PathBuf>,
    /// Truncation depths, comma separated [default: 20,30,40]
    #[arg(long, value_delimiter = ',')]
    pub m_bar: Option<Vec<u32>>,
    /// Beta x Beta prior [default: Beta(1,1)xBeta(1,1)]
    #[arg(long)]
    pub prior: Option<String>,
    /// Directory the tables are written to, as benefit-m<M>.bin
    #[arg(long, env = "BANDIT_LAB_TABLE", default_value = "tables")]
    pub table: PathBuf,
    /// Exact output file; only with a single m_bar
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Seed of the randomized checks
    #[arg(long, env = "BANDIT_LAB_SEED", default_value_t = 1)]
    pub seed: u64,
}

/// Run a parsed command line, reporting progress to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Threads(e.to_string()))?;
    }
    let say = |out: &mut dyn Write, line: String| {
        writeln!(out, "{line}").map_err(|e| CliError::Io {
            path: "stdout".into(),
            message: e.to_string(),
        })
    };
    match cli.command {
        Command::Run(args) => {
            let cfg = run_config(&args)?;
            let outputs = run_preset(&cfg, &args.table)?;
            for path in outputs.write(&cfg.out)? {
                say(out, format!("wrote {}", path.display()))?;
            }
            for line in &outputs.summary {
                say(out, line.clone())?;
            }
        }
        Command::DpBuild(args) => {
            for (path, table) in dp_build(&args)? {
                say(
                    out,
                    format!("wrote {} ({} states)", path.display(), table.len()),
                )?;
            }
        }
        Command::Verify(args) => {
            let checks = run_checks(args.seed);
            let failed = checks.iter().filter(|c| !c.passed).count();
            for c in &checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                say(out, format!("{status} {}: {}", c.name, c.detail))?;
            }
            if failed > 0 {
                return Err(CliError::VerifyFailed(failed));
            }
        }
    }
    Ok(())
}

fn file_layer(path: Option<&PathBuf>) -> Result<Layer, CliError> {
    Ok(match path {
        Some(p) => Layer::read(p)?,
        None => Layer::new(),
    })
}

/// Resolve `run` settings: preset, config file, then environment and flags.
pub fn run_config(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let file = file_layer(args.config.as_ref())?;
    let mut flags = Layer::new();
    if let Some(v) = args.seed {
        flags.set("seed", &v.to_string());
    }
    if let Some(v) = args.trials {
        flags.set("trials", &v.to_string());
    }
    if let Some(v) = args.horizon {
        flags.set("horizon", &v.to_string());
    }
    if let Some(v) = &args.out {
        flags.set("out", &v.display().to_string());
    }
    Ok(ExperimentConfig::resolve(
        args.experiment.as_deref(),
        &file,
        &flags,
    )?)
}

/// Build and save the requested tables.
pub fn dp_build(args: &DpBuildArgs) -> Result<Vec<(PathBuf, BenefitTable)>, CliError> {
    let file = file_layer(args.config.as_ref())?;
    let prior_spec = args
        .prior
        .clone()
        .or_else(|| file.get("prior").map(String::from))
        .unwrap_or_else(|| "Beta(1,1)xBeta(1,1)".into());
    let state = parse_prior(&prior_spec, FamilySpec::Bernoulli)?;
    let (
        ArmBelief::Beta {
            alpha: a1,
            beta: b1,
        },
        ArmBelief::Beta {
            alpha: a2,
            beta: b2,
        },
    ) = (*state.arm1(), *state.arm2())
    else {
        return Err(CliError::Usage(format!(
            "tables need a Beta x Beta prior, got {prior_spec}"
        )));
    };
    let m_bars = match (&args.m_bar, file.get("m_bar")) {
        (Some(m), _) => m.clone(),
        (None, Some(raw)) if !raw.is_empty() => raw
            .split(',')
            .map(|v| {
                v.trim().parse().map_err(|_| ConfigError::Value {
                    key: "m_bar".into(),
                    message: format!("`{v}` is not a whole number"),
                })
            })
            .collect::<Result<_, _>>()?,
        _ => vec![20, 30, 40],
    };
    if args.out.is_some() && m_bars.len() != 1 {
        return Err(CliError::Usage("--out takes a single m_bar".into()));
    }
    let mut built = Vec::new();
    for m in m_bars {
        let table = BenefitTable::build([a1, b1, a2, b2], m)?;
        let path = match &args.out {
            Some(p) => p.clone(),
            None => {
                std::fs::create_dir_all(&args.table).map_err(|e| CliError::io(&args.table, e))?;
                table_path(&args.table, m)
            }
        };
        table.save(&path)?;
        built.push((path, table));
    }
    Ok(built)
}
