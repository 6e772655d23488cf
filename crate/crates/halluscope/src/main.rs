use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use halluscope::commands::{self, Run};
use halluscope::config::{RunConfig, CONFIG_ENV};
use halluscope::Error;

#[derive(Parser)]
#[command(
    name = "halluscope",
    version,
    about = "Detect and analyse hallucinated machine translations"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write a perturbed copy of the corpus sources.
    Perturb,
    /// Derive per-model threshold profiles from validation data.
    Calibrate,
    /// Run the detectors and write verdicts.
    Detect,
    /// Route hallucinations to fallback systems and report reversal rates.
    Fallback,
    /// Aggregate verdicts into tables and heatmap grids.
    Report,
}

fn run(cli: Cli) -> Result<(), Error> {
    let path = cli
        .config
        .ok_or_else(|| Error::Usage(format!("no config: pass --config or set {CONFIG_ENV}")))?;
    let run = Run::new(RunConfig::load(&path)?, cli.out, cli.seed, cli.jobs)?;
    match cli.command {
        Command::Perturb => commands::perturb(&run),
        Command::Calibrate => commands::calibrate(&run),
        Command::Detect => commands::detect(&run),
        Command::Fallback => commands::fallback(&run),
        Command::Report => commands::report(&run),
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().lines().next().unwrap_or("invalid arguments"), 1),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string(), e.exit_code() as u8),
    }
}
