mod manifest;
mod report;
mod runner;

use clap::Parser;

fn main() {
    let cli = manifest::Cli::parse();
    std::process::exit(runner::run_cli(cli));
}
