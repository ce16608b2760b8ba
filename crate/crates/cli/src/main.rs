use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jumplab_cli::{output, run_config, RunOptions};

#[derive(Parser)]
#[command(name = "jumplab", version, about = "Numerical laboratory for symmetric jump processes on grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment of a config file.
    Run {
        config: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Seed used by every randomized experiment instead of its own.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Output directory, overriding the config's `output_dir`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print a table of a finished run.
    Report { dir: PathBuf },
    /// Print the plot series of one experiment as CSV.
    Plotdata { dir: PathBuf, id: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            jobs,
            seed_override,
            output,
        } => run_config(
            &config,
            &RunOptions {
                jobs,
                seed_override,
                output,
            },
        )
        .map(|s| {
            for e in &s.experiments {
                let status = if e.pass { "ok" } else { "FAIL" };
                println!("{status:<5} {} ({})", e.id, e.operation);
                if let Some(err) = &e.error {
                    println!("      {err}");
                }
            }
            s.all_passed
        }),
        Command::Report { dir } => output::report(&dir).map(|t| {
            print!("{t}");
            true
        }),
        Command::Plotdata { dir, id } => output::plot_data(&dir, &id).map(|t| {
            print!("{t}");
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
