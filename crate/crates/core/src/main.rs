use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use gmap::cli::{exit_code, run, Cli};
use gmap::Error;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.stdout.as_bytes());
            let _ = stdout.flush();
            eprint!("{}", out.stderr);
            ExitCode::from(out.code as u8)
        }
        Err(e) => {
            match &e {
                Error::Infeasible => {
                    eprintln!("infeasible: no assignment satisfies the constraints")
                }
                other => eprintln!("error: {}", other.to_string().replace('\n', " ")),
            }
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
