use clap::Parser;
use freespan_cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FREESPAN_LOG", "info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
