use clap::Parser;

fn main() {
    let cli = blockwalk_cli::Cli::parse();
    match blockwalk_cli::run_cli(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(blockwalk_cli::run::EXIT_COMPUTE);
        }
    }
}
