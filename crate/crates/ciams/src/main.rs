use std::process::ExitCode;

use clap::Parser;

use ciams::cli::{run, Cli};
use ciams_core::CiamsError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<CiamsError>() {
                Some(ce) if ce.is_validation() => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
