mod args;
mod commands;
mod error;
mod report;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command, ModelAction};
use error::{CliError, EXIT_VALIDATION};
use report::RunContext;

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::validation("invalid_input", "--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::validation("threads", e.to_string()))?;
    }
    let mut ctx = RunContext::new(cli.seed);
    match &cli.command {
        Command::Model { action: ModelAction::New(a) } => commands::model_new(&mut ctx, a),
        Command::Bound(a) => commands::bound(&mut ctx, a),
        Command::Rate(a) => commands::rate(&mut ctx, a),
        Command::Simulate(a) => commands::simulate(&mut ctx, a, false),
        Command::Compare(a) => commands::simulate(&mut ctx, a, true),
        Command::Inequalities(a) => commands::inequalities(&mut ctx, a),
        Command::Concentrate(a) => commands::concentrate(&mut ctx, a),
        Command::Check(a) => commands::check(&mut ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::validation("usage", e.render().to_string().trim_end());
            eprintln!("{}", err.to_json());
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit)
        }
    }
}
