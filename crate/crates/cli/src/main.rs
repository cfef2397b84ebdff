use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let level = match sitekeep_cli::Cli::try_parse().map_or(0, |c| c.verbose) {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let env: Vec<(String, String)> = std::env::vars().collect();
    let code = sitekeep_cli::main_with(std::env::args_os(), env, &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}
