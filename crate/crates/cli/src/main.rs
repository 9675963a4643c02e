use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = match ideator_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are validation errors; exit code 2 means backend failure.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let code = ideator_cli::run(cli, &mut std::io::stdout().lock(), &mut std::io::stderr());
    ExitCode::from(code)
}
