mod args;
mod commands;
mod config;
mod error;
mod manifest;
mod report;
mod setup;

use std::ffi::OsString;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::{usage, CliError};
use crate::manifest::Recorder;

fn main() {
    let argv: Vec<OsString> = std::env::args_os().collect();
    if let Err(e) = run(argv) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(argv: Vec<OsString>) -> Result<(), CliError> {
    let config_file = config::find_config_path(&argv);
    let merged = match &config_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            config::merge(argv.clone(), &config::parse_config(&text, path)?)?
        }
        None => argv.clone(),
    };
    let cli = Cli::try_parse_from(&merged).unwrap_or_else(|e| e.exit());

    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        // fails only if a pool already exists, in which case its size stands
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let mut rec = Recorder::new();
    let dry = cli.dry_run;
    let manifest = match &cli.command {
        Command::Sample(a) => commands::sample(a, dry, &mut rec)?,
        Command::Stats(a) => commands::stats(a, dry, &mut rec)?,
        Command::Design(a) => commands::design(a, dry, &mut rec)?,
        Command::Baseline(a) => commands::baseline(a, dry, &mut rec)?,
        Command::Posterior(a) => commands::posterior(a, dry, &mut rec)?,
        Command::Validate(a) => commands::validate(a, dry, &mut rec)?,
    };
    if let Some(path) = manifest {
        let command_line = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        let snapshot = serde_json::to_value(&cli)?;
        rec.finish(command_line, config_file, snapshot, &path)?;
        eprintln!("{} manifest: {}", cli.command.name(), path.display());
    }
    Ok(())
}
