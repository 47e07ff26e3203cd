use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = sdn::cli::Cli::parse();
    let result = sdn::cli::init_threads().and_then(|()| sdn::cli::run(cli));
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sdn: {}", e.to_string().replace('\n', "; "));
            ExitCode::FAILURE
        }
    }
}
