use std::process::ExitCode;

use clap::Parser;
use lattice_lab::{load_config, run, Cli, Status};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(Status::Error as u8);
        }
    }
    let outcome = load_config(&cli).and_then(|cfg| run(cli.command, &cfg));
    let status = match outcome {
        Ok(result) => {
            print!("{}", result.report.text());
            for f in &result.files {
                println!("wrote {}", f.display());
            }
            if result.passed() {
                Status::Passed
            } else {
                Status::Failed
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            Status::Error
        }
    };
    ExitCode::from(status as u8)
}
