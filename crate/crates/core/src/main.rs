use clap::Parser;

fn main() {
    std::process::exit(xstar::cli::main_with_args(xstar::cli::Args::parse()));
}
