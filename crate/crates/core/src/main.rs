use clap::Parser;
use shrinkage_core::cli::{main_with_args, Args};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    std::process::exit(main_with_args(Args::parse()));
}
