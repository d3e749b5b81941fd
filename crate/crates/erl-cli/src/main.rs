use clap::Parser;
use erl_cli::commands::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(erl_cli::exit_code(&err));
        }
    }
}
