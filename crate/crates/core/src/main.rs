use clap::Parser;

fn main() {
    let cli = qdring::cli::Cli::parse();
    if let Err(e) = qdring::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
