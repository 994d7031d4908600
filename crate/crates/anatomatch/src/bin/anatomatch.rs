use clap::Parser;

fn main() {
    let cli = anatomatch::cli::Cli::parse();
    if let Err(e) = anatomatch::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.class().exit_code());
    }
}
