use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use levysir::commands::{self, CliError, CommandOutput, Overrides};
use levysir::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "levysir",
    version,
    about = "Stochastic SIR model with Levy jumps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print R0, T0s, the regime and the assumption constants.
    Threshold(Common),
    /// Simulate one path and write trajectory.csv.
    Simulate(Common),
    /// Run a path ensemble and write summaries and terminal histograms.
    Ensemble(Common),
    /// Run the verification suite; exit code counts failed checks.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// Config file.
    config: PathBuf,
    /// Apply the overrides of `variant.<NAME>.*`.
    #[arg(long)]
    variant: Option<String>,
    /// Override scheme.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    svg: bool,
}

type Handler = fn(&RunConfig) -> Result<CommandOutput, CliError>;

fn run(cli: Cli) -> Result<CommandOutput, CliError> {
    let (common, f): (Common, Handler) = match cli.command {
        Command::Threshold(c) => (c, commands::cmd_threshold),
        Command::Simulate(c) => (c, commands::cmd_simulate),
        Command::Ensemble(c) => (c, commands::cmd_ensemble),
        Command::Verify(c) => (c, commands::cmd_verify),
    };
    let overrides = Overrides {
        seed: common.seed,
        out: common.out,
        svg: common.svg,
    };
    let cfg = commands::load_config(&common.config, common.variant.as_deref(), &overrides)?;
    f(&cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            print!("{}", out.stdout);
            ExitCode::from(out.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
