use std::process::ExitCode;

use clap::Parser;
use vfdetect_cli::args::Cli;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match vfdetect_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(vfdetect_cli::exit_code(&e) as u8)
        }
    }
}
