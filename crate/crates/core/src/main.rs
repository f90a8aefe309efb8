use clap::Parser;

fn main() {
    let cli = cable_beam::cli::Cli::parse();
    std::process::exit(cable_beam::cli::run(cli));
}
