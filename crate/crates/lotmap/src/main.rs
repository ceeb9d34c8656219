use clap::Parser;

use lotmap::cli::{run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("lotmap: {e}");
        std::process::exit(e.exit_code());
    }
}
