use clap::Parser;
use om_cli::{run, Args};

fn main() {
    let args = Args::parse();
    match run(&args) {
        Ok(summary) => {
            for line in summary {
                println!("{line}");
            }
        }
        Err(e) => {
            eprintln!("omlab {}: {e}", args.command.name());
            std::process::exit(e.exit_code());
        }
    }
}
