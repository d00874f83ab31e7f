use clap::Parser;

fn main() {
    let cli = hjmm_cli::Cli::parse();
    std::process::exit(hjmm_cli::main_with(&cli));
}
