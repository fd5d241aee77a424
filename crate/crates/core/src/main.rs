use clap::Parser;

fn main() {
    let cli = lipexp::cli::Cli::parse();
    std::process::exit(lipexp::cli::run(cli));
}
