use clap::Parser;

use nash_seek::cli::{self, Cli};

fn main() {
    let cli = Cli::parse();
    let outcome = cli::run(&cli);
    if outcome.is_success() {
        if !cli.quiet {
            print!("{}", outcome.report);
        }
    } else if cli.quiet {
        eprint!("{}", outcome.report);
    } else {
        print!("{}", outcome.report);
    }
    std::process::exit(outcome.code);
}
