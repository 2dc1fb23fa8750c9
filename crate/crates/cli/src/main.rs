use clap::Parser;

fn main() {
    let cli = instrasim_cli::Cli::parse();
    if let Err(e) = instrasim_cli::run(&cli) {
        eprintln!("instrasim: {e}");
        std::process::exit(e.exit_code());
    }
}
