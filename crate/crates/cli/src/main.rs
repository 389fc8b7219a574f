use clap::Parser;

fn main() {
    let cli = pathwise_cli::cli::Cli::parse();
    if let Err(e) = pathwise_cli::cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
