use clap::Parser;

fn main() {
    let cli = curvestop::cli::Cli::parse();
    if let Err(e) = curvestop::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
