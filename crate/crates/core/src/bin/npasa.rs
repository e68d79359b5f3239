use clap::Parser;
use npasa::cli::{self, Cli};

fn main() {
    cli::init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap uses 2 for usage errors, which is taken by non-convergence
            std::process::exit(if e.use_stderr() { cli::EXIT_INPUT } else { cli::EXIT_OK });
        }
    };
    std::process::exit(cli::run(cli));
}
