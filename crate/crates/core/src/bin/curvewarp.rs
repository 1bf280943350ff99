use std::io::Write;
use std::process::ExitCode;

use curvewarp::cli::{run, RunError};

fn main() -> ExitCode {
    match run(std::env::args_os()) {
        Ok(text) => {
            print!("{text}");
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(RunError::Usage(e)) => e.exit(),
        Err(RunError::Failed(e)) => {
            let category = e.category();
            eprintln!("curvewarp [{}]: {e}", category.label());
            ExitCode::from(category.exit_code() as u8)
        }
    }
}
