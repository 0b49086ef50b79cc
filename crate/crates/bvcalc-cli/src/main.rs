//! Command-line front end for exact expectation values.
//!
//! Three subcommands share a model-file argument: `expect` computes `<f>`
//! as a truncated series in ħ with any subset of the three engines and
//! compares them, `list-diagrams` prints the closed diagram classes behind
//! `<f>` with their symmetry factors, and `check` runs a self-test battery.
//!
//! Exit codes: 0 when everything ran and agreed, 1 when engines disagreed
//! or a check failed, 2 for hard errors (unreadable files, parse or
//! validation errors, out-of-range observables, refused computations).

mod checks;
mod commands;
mod modelfile;
mod observable;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bvcalc::model::ValidatedModel;

use checks::CheckConfig;
use commands::MethodSet;

#[derive(Parser)]
#[command(
    name = "bvcalc",
    about = "Exact expectation values for perturbed Gaussian models, three independent ways"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute <f> as a truncated series in ħ and compare engines
    Expect {
        #[command(flatten)]
        target: Target,
        /// Engine selection
        #[arg(long, value_enum, default_value_t = Method::All)]
        method: Method,
        #[command(flatten)]
        output: Output,
    },
    /// List the closed diagram classes behind <f> with symmetry factors
    ListDiagrams {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        output: Output,
    },
    /// Run a self-test battery against the model
    Check {
        /// Path to the model file
        #[arg(long)]
        model: String,
        /// Truncation order in ħ
        #[arg(long, default_value_t = 4)]
        order: u32,
        /// Largest observable degree the battery exercises
        #[arg(long, default_value_t = 4)]
        nmax: usize,
        /// Seed for the randomized checks
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Target {
    /// Path to the model file
    #[arg(long)]
    model: String,
    /// Observable: factors like "x1^2 x3", records like "1,2=1/2 2,1=1/2",
    /// or "1" for the unit
    #[arg(long)]
    observable: String,
    /// Truncation order in ħ, which also bounds the betti number of the
    /// diagrams involved
    #[arg(long, default_value_t = 4)]
    order: u32,
}

#[derive(Args)]
struct Output {
    /// Output format: aligned text or one JSON object per line
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Reduce,
    Diagrams,
    Oracle,
    All,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Records,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok((text, true)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Ok((text, false)) => {
            print!("{text}");
            ExitCode::from(1)
        }
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(String, bool), String> {
    match cli.command {
        Command::Expect {
            target,
            method,
            output,
        } => {
            let model = load_model(&target.model)?;
            let obs = observable::parse_observable(&target.observable, model.dimension())?;
            let methods = MethodSet {
                reduce: matches!(method, Method::All | Method::Reduce),
                diagrams: matches!(method, Method::All | Method::Diagrams),
                oracle: matches!(method, Method::All | Method::Oracle),
            };
            commands::expect(
                &model,
                &obs,
                target.order,
                &methods,
                output.format == Format::Records,
            )
        }
        Command::ListDiagrams { target, output } => {
            let model = load_model(&target.model)?;
            let obs = observable::parse_observable(&target.observable, model.dimension())?;
            commands::list_diagrams(
                &model,
                &obs,
                target.order,
                output.format == Format::Records,
            )
        }
        Command::Check {
            model,
            order,
            nmax,
            seed,
        } => {
            let model = load_model(&model)?;
            checks::check(&model, &CheckConfig { order, nmax, seed })
        }
    }
}

fn load_model(path: &str) -> Result<ValidatedModel, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
    let spec = modelfile::parse_model(&text).map_err(|e| e.display(path))?;
    spec.validate().map_err(|e| format!("{path}: {e}"))
}
