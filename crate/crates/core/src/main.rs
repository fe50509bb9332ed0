use clap::Parser;

use credexp::cli::{execute, exit_code, Cli};

fn main() {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            std::process::exit(exit_code(&e));
        }
    }
}
