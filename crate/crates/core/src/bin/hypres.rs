use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use hypres::report::{self, exit_code, render_check, Command, RunConfig, RunContext, CACHE_ENV};
use hypres::Error;

/// Periodic orbits, Floquet data and resonance strings for Hamiltonian systems.
#[derive(Parser)]
#[command(name = "hypres", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for the JSON report and CSV exports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Exit with status 4 when a structural hypothesis fails.
    #[arg(long, global = true)]
    strict: bool,

    /// Print errors as JSON on stdout.
    #[arg(long, global = true)]
    json_errors: bool,

    /// Orbit cache file (overridden by HYPRES_CACHE).
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Locate the periodic orbit at the configured energy.
    FindOrbit,
    /// Continue the orbit over the energy grid.
    Continue,
    /// Floquet multipliers, exponents and splitting.
    Floquet,
    /// Check the structural hypotheses on the orbit.
    Check,
    /// Resonance strings in the configured window.
    Resonances,
    /// Everything above in one report.
    Report,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::FindOrbit => Command::FindOrbit,
            Cmd::Continue => Command::Continue,
            Cmd::Floquet => Command::Floquet,
            Cmd::Check => Command::Check,
            Cmd::Resonances => Command::Resonances,
            Cmd::Report => Command::Report,
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let cfg = RunConfig::load(path)?;
    let cache = std::env::var_os(CACHE_ENV).map(PathBuf::from).or_else(|| cli.cache.clone());
    let cmd = Command::from(cli.command);
    let out = report::run(cmd, &cfg, &RunContext { cache })?;

    if let Some(dir) = cli.out.as_ref().or(cfg.output.dir.as_ref()) {
        for p in report::write_outputs(&out, &cfg, dir)? {
            log::info!("wrote {}", p.display());
        }
    }

    let mut status = 0;
    if let Some(h) = &out.report.hypotheses {
        if cmd == Command::Check {
            eprint!("{}", render_check(h));
        }
        if cli.strict && !h.all_ok() {
            status = 4;
        }
    }
    print!("{}", out.report.to_json());
    Ok(status)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let code = exit_code(&e, cli.strict);
            error!("{e}");
            if cli.json_errors {
                print!("{}", report::error_json(&e, code));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(code as u8)
        }
    }
}
