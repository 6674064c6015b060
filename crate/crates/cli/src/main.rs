use std::process::ExitCode;

use clap::Parser;
use fracspde_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FRACSPDE_LOG", "warn")).init();
    // clap exits with status 2 and usage text on unknown subcommands or flags.
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {}: {msg}", cli.command.name());
            ExitCode::from(1)
        }
    }
}
