use clap::Parser;

fn main() {
    let cli = abel_cli::Cli::parse();
    let code = match abel_cli::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            abel_cli::exit::ERROR
        }
    };
    std::process::exit(code);
}
