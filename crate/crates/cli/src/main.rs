use clap::Parser;
use env_logger::Env;

fn main() {
    env_logger::Builder::from_env(Env::new().filter_or("DFRC_LOG", "warn"))
        .format_timestamp(None)
        .init();
    std::process::exit(dfrc_cli::run(dfrc_cli::Cli::parse()));
}
