use clap::Parser;

fn main() {
    let cli = hbf_cli::Cli::parse();
    if let Err(e) = hbf_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
