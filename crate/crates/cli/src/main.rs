//! `enrich`: run, label, evaluate and compare ENRICH experiments.

mod commands;
mod spec;

use std::fmt;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use enrich_core::{Approach, QualityConstants, RobustnessParams};

use crate::spec::{load_config, Experiment};

/// Bad flags or arguments; exits with status 2.
#[derive(Debug)]
pub struct UsageError(String);

impl UsageError {
    pub fn new(msg: impl Into<String>) -> Self {
        UsageError(msg.into())
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(
    name = "enrich",
    version,
    about = "Characterize non-robust input regions of a priority traffic shaper"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SpecArgs {
    /// Experiment spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Shaper config overriding the one named in the spec.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory overriding the spec's.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

impl SpecArgs {
    fn load(&self) -> Result<Experiment> {
        Experiment::load(&self.spec, self.config.as_deref(), self.out.as_deref())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one input: per-class metrics, MOS and robustness score.
    Simulate {
        /// Shaper config (JSON).
        #[arg(long, required_unless_present = "spec")]
        config: Option<PathBuf>,
        /// Take config, quality constants and thresholds from a spec instead.
        #[arg(long, conflicts_with = "config")]
        spec: Option<PathBuf>,
        /// Requested bandwidths, comma separated, lowest priority first.
        #[arg(long, allow_hyphen_values = true)]
        input: String,
        /// Seed for simulator noise.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run ENRICH for one or more seeds.
    Enrich {
        #[command(flatten)]
        spec: SpecArgs,
        /// First seed (defaults to the spec's).
        #[arg(long)]
        seed: Option<u64>,
        /// Number of consecutive seeds (defaults to the spec's eval.runs).
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Run the single-tree BASELINE for one or more seeds.
    Baseline {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Build the labelled test set, or label a single input.
    Label {
        #[command(flatten)]
        spec: SpecArgs,
        /// Label this input instead of building the test set.
        #[arg(long, allow_hyphen_values = true)]
        input: Option<String>,
        /// Test-set seed, or the noise seed when labelling one input.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score run ensembles against the labelled test set.
    Evaluate {
        #[command(flatten)]
        spec: SpecArgs,
        /// Comma-separated range widths as fractions of each default range.
        #[arg(long, value_delimiter = ',')]
        epsilon: Option<Vec<f64>>,
        /// Test-set seed overriding the spec's.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Mann-Whitney U test and mean absolute error between two score files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Fail when the samples differ in length.
        #[arg(long)]
        mae: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match dispatch(cli.command, &mut out).and_then(|()| Ok(out.flush()?)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn dispatch(command: Command, out: &mut impl Write) -> Result<()> {
    match command {
        Command::Simulate {
            config,
            spec,
            input,
            seed,
        } => {
            let (config, quality, params) = match (config, spec) {
                (_, Some(spec)) => {
                    let exp = Experiment::load(&spec, None, None)?;
                    let params = exp.spec.run.robustness_params(exp.config.n);
                    (exp.config, exp.spec.quality, params)
                }
                (Some(path), None) => {
                    let config = load_config(&path)?;
                    let params = RobustnessParams::uniform(config.n);
                    (config, QualityConstants::default(), params)
                }
                (None, None) => return Err(UsageError::new("simulate needs --config or --spec").into()),
            };
            commands::simulate_cmd(&config, &quality, &params, &input, seed, out)
        }
        Command::Enrich { spec, seed, runs } => run_batch(Approach::Enrich, &spec, seed, runs, out),
        Command::Baseline { spec, seed, runs } => run_batch(Approach::Baseline, &spec, seed, runs, out),
        Command::Label { spec, input, seed } => {
            let mut exp = spec.load()?;
            if input.is_none() {
                if let Some(s) = seed {
                    exp.spec.eval.testset_seed = s;
                }
            }
            commands::label_cmd(&exp, input.as_deref(), seed, spec.force, out)
        }
        Command::Evaluate { spec, epsilon, seed } => {
            let mut exp = spec.load()?;
            if let Some(s) = seed {
                exp.spec.eval.testset_seed = s;
            }
            let eps = epsilon.unwrap_or_else(|| exp.spec.eval.epsilons.clone());
            commands::evaluate_cmd(&exp, &eps, spec.force, out)
        }
        Command::Compare { a, b, mae } => commands::compare_cmd(&a, &b, mae, out),
    }
}

fn run_batch(
    approach: Approach,
    args: &SpecArgs,
    seed: Option<u64>,
    runs: Option<usize>,
    out: &mut impl Write,
) -> Result<()> {
    let mut exp = args.load()?;
    if let Some(s) = seed {
        exp.spec.seed = s;
        exp.spec.run.seed = s;
    }
    let runs = runs.unwrap_or(exp.spec.eval.runs);
    commands::run_cmd(&exp, approach, runs, args.force, out)
}
