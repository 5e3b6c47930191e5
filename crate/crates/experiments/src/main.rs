use clap::Parser;
use qinfer_experiments::cli::{execute, Cli};

fn main() {
    std::process::exit(execute(Cli::parse()));
}
