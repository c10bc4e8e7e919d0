mod commands;
mod config;

use clap::Parser;

fn main() {
    let cli = commands::Cli::parse();
    std::process::exit(commands::run(cli));
}
