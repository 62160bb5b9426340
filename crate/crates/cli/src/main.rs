//! `nifeq`: gate, synthesize, verify and stress NI feedback designs from
//! JSON system files.
//!
//! Exit codes: 0 pass, 1 domain-level negative result, 2 input error,
//! 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nifeq_core::Error;

mod commands;
mod io;

use commands::{GridArgs, RobustArgs, SynthArgs};
use io::MatrixSpec;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidOption(_)
            | Error::Dimension(_)
            | Error::Precondition(_)
            | Error::IllPosedLoop(_) => 2,
            Error::UnsupportedRelativeDegree(_)
            | Error::Uncontrollable(_)
            | Error::ZeroAtOrigin(_)
            | Error::NotLyapunovStable(_)
            | Error::NotHurwitz(_)
            | Error::InputChannelNotPositive(_)
            | Error::PoleAtOrigin => 1,
            _ => 3,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "nifeq",
    version,
    about = "Negative-imaginary feedback equivalence toolkit"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Relative degree, controllability, zero dynamics and eligibility.
    Analyze {
        system: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// State feedback rendering the plant NI (or SSNI with --ssni).
    Synthesize {
        system: PathBuf,
        #[arg(long)]
        ssni: bool,
        /// Closed-loop DC gain: a number (times I) or [[..],..].
        #[arg(long)]
        y2: Option<String>,
        /// Relative-degree-two damping gain: a number (times I) or [[..],..].
        #[arg(long)]
        k3: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certificate (when given) and frequency-domain NI checks.
    Verify {
        system: PathBuf,
        /// File holding Y: an array of rows, {"Y": ..} or a synthesis report.
        #[arg(long)]
        certificate: Option<PathBuf>,
        /// Strict (SSNI) checks.
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// γ-bounded synthesis and optional interconnection with an uncertainty.
    Robust {
        system: PathBuf,
        #[arg(long)]
        gamma: Option<f64>,
        /// System file of Δ, or `sample:<seed>`.
        #[arg(long)]
        delta: Option<String>,
        /// Simulate the free interconnection from x0 = 1.
        #[arg(long)]
        simulate: bool,
        #[arg(long, default_value_t = 20.0)]
        horizon: f64,
        /// CSV trajectory output for --simulate.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        y2: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bode data as CSV.
    Bode {
        system: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn spec(flag: &str, s: Option<&String>) -> Result<Option<MatrixSpec>, Failure> {
    s.map(|s| MatrixSpec::parse_flag(flag, s)).transpose()
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.cmd {
        Cmd::Analyze { system, out } => commands::analyze(&system, out.as_deref()),
        Cmd::Synthesize {
            system,
            ssni,
            y2,
            k3,
            seed,
            out,
        } => {
            let (y2, k3) = (spec("--y2", y2.as_ref())?, spec("--k3", k3.as_ref())?);
            let a = SynthArgs {
                ssni,
                y2: y2.as_ref(),
                k3: k3.as_ref(),
                seed,
            };
            commands::synthesize(&system, a, out.as_deref())
        }
        Cmd::Verify {
            system,
            certificate,
            strict,
            grid,
            out,
        } => commands::verify(
            &system,
            certificate.as_deref(),
            strict,
            &grid,
            out.as_deref(),
        ),
        Cmd::Robust {
            system,
            gamma,
            delta,
            simulate,
            horizon,
            trajectory,
            y2,
            seed,
            out,
        } => {
            let y2 = spec("--y2", y2.as_ref())?;
            let a = RobustArgs {
                gamma,
                delta: delta.as_deref(),
                simulate,
                horizon,
                trajectory: trajectory.as_deref(),
                seed,
                y2: y2.as_ref(),
            };
            commands::robust(&system, a, out.as_deref())
        }
        Cmd::Bode { system, grid, out } => commands::bode(&system, &grid, out.as_ref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
