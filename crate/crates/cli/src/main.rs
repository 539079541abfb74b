use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use riddle_cli::commands::{self, Outcome, Run};
use riddle_cli::CliError;

#[derive(Parser)]
#[command(
    name = "riddle",
    version,
    about = "Riddled basins of skew products over expanding interval maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the hypotheses and print their witnesses
    Check(Common),
    /// Classify a grid of initial conditions into the two basins
    Basin(Common),
    /// Compare the thermodynamic and empirical Loynes exponents
    Loynes(Common),
    /// Estimate stability indices at configured points
    Stability(Common),
    /// Compute the multifractal spectrum of the stability index
    Spectrum(Common),
    /// Evaluate the invariant graph on a grid
    Graph(Common),
    /// Tabulate the tilted pressure function
    Pressure(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output_dir`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed, overriding `seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

type Handler = fn(&Run) -> Result<Outcome, CliError>;

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let (common, f): (&Common, Handler) = match &cli.command {
        Command::Check(c) => (c, commands::check),
        Command::Basin(c) => (c, commands::basin),
        Command::Loynes(c) => (c, commands::loynes),
        Command::Stability(c) => (c, commands::stability),
        Command::Spectrum(c) => (c, commands::spectrum),
        Command::Graph(c) => (c, commands::graph),
        Command::Pressure(c) => (c, commands::pressure_cmd),
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let run = Run::load(&common.config, common.out.clone(), common.seed)?;
    f(&run)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => {
            let mut stdout = std::io::stdout().lock();
            for line in &outcome.lines {
                let _ = writeln!(stdout, "{line}");
            }
            for file in &outcome.files {
                let _ = writeln!(stdout, "wrote {}", file.display());
            }
            match outcome.failure {
                Some(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
