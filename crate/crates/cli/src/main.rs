use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use riqs::compare::compare_files;
use riqs::report::write_json;
use riqs::sweep::{sweep, thread_cap};
use riqs::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "riqs", version, about = "Repeated-interaction quantum system simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Run { config: PathBuf },
    /// Compare reports of one model family at different couplings.
    Compare {
        #[arg(required = true, num_args = 1..)]
        reports: Vec<PathBuf>,
        /// Also write the comparison as JSON.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a configuration for several values of one key.
    Sweep {
        config: PathBuf,
        /// Key to vary; `coupling.lambda` sets both couplings.
        #[arg(long)]
        param: String,
        #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
        values: Vec<String>,
        /// Output directory (defaults to `run.output`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run { config } => {
            let outcome = riqs::run::run_file(&config)?;
            for path in &outcome.artifacts {
                println!("wrote {}", path.display());
            }
            Ok(0)
        }
        Command::Compare { reports, output } => {
            let comparison = compare_files(&reports)?;
            print!("{}", comparison.to_table());
            if let Some(path) = output {
                write_json(&path, &comparison.to_json())?;
            }
            Ok(0)
        }
        Command::Sweep {
            config,
            param,
            values,
            output,
        } => {
            let base = ExperimentConfig::from_file(&config)?;
            let outcome = sweep(&base, &param, &values, output.as_deref(), thread_cap()?)?;
            for r in &outcome.runs {
                match &r.error {
                    None => println!("{param}={}: ok ({})", r.value, r.directory.display()),
                    Some(e) => eprintln!("{param}={}: {e}", r.value),
                }
            }
            if let Some(c) = &outcome.comparison {
                print!("{}", c.to_table());
            }
            Ok(outcome.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
