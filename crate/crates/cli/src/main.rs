mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::CliError;

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let written = match &cli.command {
        Command::Simulate(a) => commands::simulate(a)?,
        Command::Profile(a) => commands::profile(a)?,
        Command::Forecast(a) => commands::forecast(a)?,
        Command::Calibrate(a) => vec![commands::calibrate(a)?],
        Command::FitTail(a) => vec![commands::fit_tail(a)?],
    };
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pidsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
