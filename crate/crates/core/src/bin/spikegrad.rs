use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spikegrad::commands::{cmd_figdata, cmd_gradcheck, cmd_run, Overrides, FIGURES};

#[derive(Parser)]
#[command(
    name = "spikegrad",
    version,
    about = "Spike-time gradient descent experiments"
)]
struct Cli {
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for pair suites (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suite described by a config and write CSVs and a summary.
    Run { config: PathBuf },
    /// Run the finite-difference and quadrature oracles.
    Gradcheck { config: PathBuf },
    /// Emit the data behind one figure panel.
    #[command(after_help = format!("Figure ids: {}", FIGURES.join(", ")))]
    Figdata { id: String, config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let ov = Overrides {
        seed: cli.seed,
        jobs: cli.jobs,
        out_dir: cli.out_dir,
    };
    let code = match &cli.command {
        Command::Run { config } => cmd_run(config, &ov),
        Command::Gradcheck { config } => cmd_gradcheck(config, &ov),
        Command::Figdata { id, config } => cmd_figdata(id, config, &ov),
    };
    ExitCode::from(code as u8)
}
