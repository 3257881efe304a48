//! Command-line front end for the jet-space flow geometry library.
//!
//! Exit codes: 0 success, 1 property-check failure, 2 usage or schema
//! error, 3 numerical blow-up, 4 metric domain error.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

/// Error carrying the process exit code it maps to.
pub(crate) struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(error: impl Into<anyhow::Error>) -> Failure {
        Failure {
            code: 2,
            error: error.into(),
        }
    }

    pub fn property(error: impl Into<anyhow::Error>) -> Failure {
        Failure {
            code: 1,
            error: error.into(),
        }
    }

    pub fn blow_up(error: impl Into<anyhow::Error>) -> Failure {
        Failure {
            code: 3,
            error: error.into(),
        }
    }

    pub fn metric_domain(error: impl Into<anyhow::Error>) -> Failure {
        Failure {
            code: 4,
            error: error.into(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "jetgeo",
    version,
    about = "Geometry of first-order flows: connections, energies, geodesics, level sets",
    subcommand_required = true,
    arg_required_else_help = true
)]
pub(crate) struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// A model is either a built-in name (`kaldor`, `tbm`) or a path to a JSON
/// document with fields name/variables/parameters/definitions/equations.
#[derive(Subcommand)]
pub(crate) enum Command {
    /// Print the geometric invariants of a model at one point
    Analyze {
        /// Built-in model name or path to a model file
        model: String,
        /// Evaluation point, comma-separated: "0.5,1.0"
        #[arg(long)]
        point: String,
        /// Emit a JSON document instead of aligned text
        #[arg(long)]
        json: bool,
        /// Override a model parameter, e.g. --param s=2.5 (repeatable)
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
    },
    /// Integrate the first-order flow and write a CSV trajectory
    Flow {
        /// Built-in model name or path to a model file
        model: String,
        /// Initial state, comma-separated
        #[arg(long)]
        from: String,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long)]
        t1: f64,
        /// Fixed integration step
        #[arg(long)]
        dt: f64,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
        /// Override a model parameter, e.g. --param s=2.5 (repeatable)
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
    },
    /// Integrate the second-order geometric dynamics and write a CSV trajectory
    Geodesic {
        /// Built-in model name or path to a model file
        model: String,
        /// Metric file (model document plus an n-by-n "metric" expression
        /// array); without it the flat-metric jet prolongation is used
        #[arg(long)]
        metric: Option<PathBuf>,
        /// Initial state, comma-separated
        #[arg(long)]
        from: String,
        /// Initial velocity; defaults to the field value at the start,
        /// which makes the geodesic follow the first-order flow
        #[arg(long)]
        v0: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long)]
        t1: f64,
        /// Fixed integration step
        #[arg(long)]
        dt: f64,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
        /// Override a model parameter, e.g. --param s=2.5 (repeatable)
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
    },
    /// Extract a constant-level set of the Yang-Mills energy
    Levelset {
        /// Built-in model name or path to a model file
        model: String,
        /// The energy level C of the set {EYM = C}
        #[arg(long)]
        level: f64,
        /// Interpret --level as the 4C right-hand side of the bracket form
        /// of the level equation and extract at C = level/4
        #[arg(long)]
        paper_normalization: bool,
        /// Per-axis bounds "Y:-3:3,K:-3:3"; names and order must match the
        /// model variables
        #[arg(long)]
        bounds: String,
        /// Samples per axis: one count for all axes ("256") or a
        /// comma-separated list ("256,128")
        #[arg(long)]
        res: String,
        /// Output path
        #[arg(long)]
        out: PathBuf,
        /// csv or svg for 2-variable models (default csv), obj for
        /// 3-variable models (default obj)
        #[arg(long, value_enum)]
        format: Option<LevelsetFormat>,
        /// Override a model parameter, e.g. --param s=2.5 (repeatable)
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
    },
    /// Run the seeded property suite and report pass/fail per property
    Check {
        /// Built-in model name or path to a model file
        model: String,
        /// Number of random sample points
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Tolerance applied to every property
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Test hook: bias the named property's measurement so it fails
        #[arg(long, hide = true, value_name = "PROPERTY")]
        inject_fault: Option<String>,
        /// Override a model parameter, e.g. --param s=2.5 (repeatable)
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub(crate) enum LevelsetFormat {
    Csv,
    Svg,
    Obj,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
