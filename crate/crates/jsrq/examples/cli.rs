//! Driving the command-line layer from code.

use clap::Parser;
use jsrq::cli::{run, Cli};

fn main() {
    let cli = Cli::parse_from(["jsrq", "compare", "--rho", "0.4", "--a", "0.5"]);
    match run(&cli) {
        Ok(art) => print!("{}", art.measures_csv()),
        Err(e) => eprintln!("error: {e} (exit code {})", e.exit_code()),
    }
}
