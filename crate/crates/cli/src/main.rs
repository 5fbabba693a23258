use clap::Parser;
use knet_cli::{run, Cli};

fn main() {
    match run(Cli::parse()) {
        Ok(stdout) => print!("{stdout}"),
        Err(e) => {
            eprintln!("knet: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
