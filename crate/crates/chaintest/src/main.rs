use clap::Parser;

fn main() {
    let cli = chaintest::cli::Cli::parse();
    std::process::exit(chaintest::cli::run(cli));
}
