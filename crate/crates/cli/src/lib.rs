//! `jstab`: runs experiments on natural mechanical systems and verifies the
//! identities relating the dynamical and Jacobi-metric stability operators.
//!
//! Exit codes: 0 success, 1 identity failure, 2 usage or configuration error,
//! 3 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod suite;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use jacobi_stability::conformal::InjectedFault;
use jacobi_stability::Error as CoreError;

use crate::commands::Report;
use crate::config::ExperimentConfig;
use crate::output::OutDir;
use crate::suite::Tolerances;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Numerical(#[from] CoreError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Numerical(e) => match e {
                CoreError::InvalidArgument(_)
                | CoreError::Expression(_)
                | CoreError::DimensionMismatch { .. }
                | CoreError::EnergyMismatch { .. }
                | CoreError::EmptySpec => 2,
                _ => 3,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    /// Flip the sign of one term of the conformal curvature formula.
    Lemma3Sign,
}

#[derive(Debug, Parser)]
#[command(name = "jstab", version, about = "Dynamical vs. Jacobi-metric stability experiments")]
pub struct Cli {
    /// TOML experiment file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Seed for random fields, variations and lemma samples.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Integration step (overrides `run.step`).
    #[arg(long, global = true, value_name = "X")]
    pub step: Option<f64>,

    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Print the JSON document instead of the text summary.
    #[arg(long, global = true)]
    pub json: bool,

    /// Override a named tolerance; repeatable.
    #[arg(long = "tolerance", global = true, value_name = "NAME=VALUE", value_parser = parse_tolerance)]
    pub tolerances: Vec<(String, f64)>,

    /// Corrupt a formula on purpose, to check that verification notices.
    #[arg(long, global = true, value_enum)]
    pub inject_fault: Option<FaultArg>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Integrate the equations of motion and write the trajectory.
    Simulate,
    /// Integrate the Jacobi-metric geodesic and compare it with the motion.
    Geodesic,
    /// Integrate the linearised flow and compare with finite differences.
    Deviation,
    /// Compare the Jacobi operator computed from g and from h.
    CompareOperators,
    /// Evaluate the second variations of S, S0J and LJ.
    SecondVariation,
    /// Check the conformal connection and curvature formulas.
    VerifyLemmas,
    /// Run the full verification suite.
    VerifyAll,
    /// Operator comparison and second variations with a combined summary.
    Report,
}

fn parse_tolerance(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let value: f64 = value.trim().parse().map_err(|e| format!("bad value in `{s}`: {e}"))?;
    Ok((name.trim().to_string(), value))
}

/// Everything a subcommand needs.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ExperimentConfig,
    pub seed: Option<u64>,
    pub step: Option<f64>,
    pub tolerances: Tolerances,
    pub fault: Option<InjectedFault>,
    pub out: PathBuf,
}

impl Context {
    pub fn from_cli(cli: &Cli) -> Result<Self, CliError> {
        let config = match &cli.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let mut tolerances = Tolerances::default();
        for (name, value) in &config.tolerances {
            tolerances.set(name, *value)?;
        }
        for (name, value) in &cli.tolerances {
            tolerances.set(name, *value)?;
        }
        if let Some(step) = cli.step {
            if !(step > 0.0 && step.is_finite()) {
                return Err(CliError::Config(format!("--step {step} must be positive")));
            }
        }
        let out = cli
            .out
            .clone()
            .or_else(|| config.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("jstab-out"));
        Ok(Self {
            config,
            seed: cli.seed,
            step: cli.step,
            tolerances,
            fault: cli.inject_fault.map(|FaultArg::Lemma3Sign| InjectedFault::Lemma3SignFlip),
            out,
        })
    }
}

pub fn execute(command: Command, ctx: &Context) -> Result<Report, CliError> {
    let mut out = OutDir::new(&ctx.out);
    match command {
        Command::Simulate => commands::simulate(ctx, &mut out),
        Command::Geodesic => commands::geodesic(ctx, &mut out),
        Command::Deviation => commands::deviation(ctx, &mut out),
        Command::CompareOperators => commands::compare_operators(ctx, &mut out),
        Command::SecondVariation => commands::second_variation(ctx, &mut out),
        Command::VerifyLemmas => commands::verify_lemmas(ctx, &mut out),
        Command::VerifyAll => commands::verify_all(ctx, &mut out),
        Command::Report => commands::report(ctx, &mut out),
    }
}

/// Parses arguments, runs the command, prints the summary and maps the
/// outcome to an exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = Context::from_cli(&cli).and_then(|ctx| execute(cli.command, &ctx));
    match result {
        Ok(report) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&report.json).expect("JSON values serialise"));
            } else {
                print!("{}", report.text);
            }
            if let Some(err) = &report.error {
                eprintln!("jstab: numerical failure: {err}");
                ExitCode::from(3)
            } else if report.pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("jstab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
