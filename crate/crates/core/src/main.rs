use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use catcher_core::config::{Mode, RunConfig};
use catcher_core::runner;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Map,
    Ensemble,
    Quantum,
    Design,
}

impl From<Command> for Mode {
    fn from(c: Command) -> Self {
        match c {
            Command::Map => Mode::Map,
            Command::Ensemble => Mode::Ensemble,
            Command::Quantum => Mode::Quantum,
            Command::Design => Mode::Design,
        }
    }
}

/// Stops particles of unknown velocity with a wall moving as sqrt(t).
#[derive(Debug, Parser)]
#[command(name = "catcher", version)]
struct Cli {
    #[arg(value_enum)]
    mode: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `numerics.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; falls back to CATCHER_OUT_DIR, then to `output_dir`
    /// in the config, then to `out/<mode>`.
    #[arg(long, env = "CATCHER_OUT_DIR")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mode = Mode::from(cli.mode);
    let result = RunConfig::from_file(&cli.config).and_then(|config| {
        let out = cli
            .out
            .clone()
            .or_else(|| config.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out").join(mode.to_string()));
        let report = runner::run(&config, mode, &out, cli.seed)?;
        for line in &report.messages {
            println!("{line}");
        }
        println!("wrote {} files to {}", report.files.len() + 1, out.display());
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
