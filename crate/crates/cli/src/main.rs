use std::path::PathBuf;
use std::process::ExitCode;

use aks_cli::run::{load, run, Command, Overrides};
use aks_cli::RunConfig;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aks", version, about = "Lax flows on twisted loop algebras, adapted frames and flat immersions")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for random initial conditions.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Maximal integration step.
    #[arg(long, global = true)]
    h: Option<f64>,
    /// Spectral parameter at which frames are built.
    #[arg(long, global = true, allow_negative_numbers = true)]
    z0: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Integrate the flow; write flow.csv and flow_samples.txt.
    Flow,
    /// Integrate flow and frames; write immersion.csv and mesh.txt.
    Frame,
    /// Spectral report of the initial condition and drift table.
    Spectral,
    /// Classify the candidate periods; write periods.txt.
    Period,
    /// Clifford torus golden run (defaults to a = 0.6, b = 0.8 on [0, 2π]²).
    Clifford,
    /// Parse the config and print its canonical form.
    ValidateConfig,
    /// Flow, frames, spectral report and period checks.
    Run,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Flow => Command::Flow,
            Cmd::Frame => Command::Frame,
            Cmd::Spectral => Command::Spectral,
            Cmd::Period => Command::Period,
            Cmd::Clifford => Command::Clifford,
            Cmd::ValidateConfig => Command::ValidateConfig,
            Cmd::Run => Command::Run,
        }
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
    let over = Overrides { seed: cli.seed, out: cli.out, h: cli.h, z0: cli.z0 };
    let cmd = Command::from(cli.command);
    let default = if cmd == Command::Clifford { RunConfig::clifford_default() } else { RunConfig::default() };
    if cli.config.is_none() && cmd != Command::Clifford {
        eprintln!("config error: --config is required for this command");
        return ExitCode::from(2);
    }
    let result = load(cli.config.as_deref(), default, &over).and_then(|cfg| run(cmd, &cfg));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for f in &outcome.failures {
                eprintln!("invariant failure: {f}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
