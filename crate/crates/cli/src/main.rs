mod args;
mod run;

use clap::Parser;

fn main() {
    let cli = args::Cli::parse();
    if let Err(e) = run::run(&cli.command) {
        eprintln!("vecalc: {e}");
        std::process::exit(e.exit_code());
    }
}
