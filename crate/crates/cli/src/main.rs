use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use gp_grief_cli::commands::run;
use gp_grief_cli::config::{Overrides, Task};

/// Gaussian process regression with grid-structured Nyström eigenfunctions.
///
/// Settings come from built-in defaults, then the --config JSON file, then
/// flags; later sources win.
#[derive(Parser)]
#[command(name = "gp-grief", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model (type-II optimization, or a fixed orthogonalized basis)
    Train,
    /// Sample weights and noise by MALA and store the draws
    Sample,
    /// Write predictive mean and variance for a CSV of inputs
    Predict,
    /// Kernel reconstruction error against p
    Reconstruct,
    /// Conjugate-gradient iteration counts with and without preconditioning
    Precondition,
    /// Write the 2D synthetic demo data and a config for it
    Demo,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let task = match cli.command {
        Command::Train => Task::Train,
        Command::Sample => Task::Sample,
        Command::Predict => Task::Predict,
        Command::Reconstruct => Task::Reconstruct,
        Command::Precondition => Task::Precondition,
        Command::Demo => Task::Demo,
    };
    if let Err(e) = run(task, &cli.flags) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
