//! `tat`: thermoacoustic tomography experiments from the command line.
//!
//! Exit status is 0 on success, 1 for invalid input and 2 for a numerical
//! failure; failures also print one JSON error record on stderr.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tat_core::TatError;

use config::Config;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
    Core(TatError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::Core(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Numerical(_) => "numerical",
            CliError::Core(e) => match e {
                TatError::Validation(_) | TatError::Shape(_) | TatError::NonFinite(_) => "validation",
                TatError::Cfl { .. } => "cfl",
                TatError::Padding { .. } => "padding",
                TatError::CgNotConverged { .. } => "cg_not_converged",
                TatError::Diverged { .. } => "diverged",
                TatError::Io(_) => "io",
                TatError::Format(_) => "format",
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<TatError> for CliError {
    fn from(e: TatError) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "tat", version, about = "Thermoacoustic tomography with variable sound speed")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// `key = value` configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set solve.T=1.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker thread cap (`run.threads`).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (`output.dir`).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write an initial pressure phantom.
    Phantom(Common),
    /// Write a medium file.
    Medium(Common),
    /// Forward solve: boundary trace, energy log and final state.
    Simulate(Common),
    /// Neumann series inversion of a boundary trace.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// `recon.method`: neumann or masked.
        #[arg(long)]
        method: Option<String>,
        /// `recon.iters`.
        #[arg(long)]
        iters: Option<usize>,
    },
    /// One-shot time reversal, with and without harmonic extension.
    Timereverse(Common),
    /// Geodesic fan and the domain exit time T(Ω).
    Rays(Common),
    /// Uniqueness and stability maps of a measurement set.
    Visibility(Common),
    /// Norms and errors of a field.
    Report(Common),
}

fn resolve(common: &Common, extra: &[(&str, String)]) -> Result<Config, CliError> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for s in &common.set {
        cfg.set(s)?;
    }
    if let Some(n) = common.threads {
        cfg.set(&format!("run.threads={n}"))?;
    }
    if let Some(o) = &common.out {
        cfg.set(&format!("output.dir={}", o.display()))?;
    }
    for (k, v) in extra {
        cfg.set(&format!("{k}={v}"))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, common, extra) = match &cli.command {
        Command::Phantom(c) => ("phantom", c, vec![]),
        Command::Medium(c) => ("medium", c, vec![]),
        Command::Simulate(c) => ("simulate", c, vec![]),
        Command::Reconstruct { common, method, iters } => {
            let mut extra = Vec::new();
            if let Some(m) = method {
                extra.push(("recon.method", m.clone()));
            }
            if let Some(n) = iters {
                extra.push(("recon.iters", n.to_string()));
            }
            ("reconstruct", common, extra)
        }
        Command::Timereverse(c) => ("timereverse", c, vec![]),
        Command::Rays(c) => ("rays", c, vec![]),
        Command::Visibility(c) => ("visibility", c, vec![]),
        Command::Report(c) => ("report", c, vec![]),
    };
    let cfg = resolve(common, &extra)?;
    let threads: usize = cfg.get("run.threads")?;
    if threads > 0 {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let outputs = commands::dispatch(name, &cfg)?;
    let summary = serde_json::json!({ "command": name, "outputs": outputs });
    println!("{summary}");
    Ok(())
}

fn fail(err: &CliError) -> ExitCode {
    let code = err.exit_code();
    let record = serde_json::json!({ "error": err.kind(), "message": err.to_string(), "exit_code": code });
    eprintln!("{record}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::Validation(e.to_string().trim_end().to_string())),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
