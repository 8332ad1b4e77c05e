//! Command-line front end: CSV ingestion, the `test`, `onesided`,
//! `simulate` and `draws` commands, and the JSON run report.

pub mod args;
pub mod commands;
pub mod error;
pub mod ingest;
pub mod report;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::{CliError, CliResult, EXIT_OK, EXIT_USAGE};
pub use crate::report::RunReport;

/// Runs the command and returns the report it produced.
pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<RunReport> {
    let mut report = match &cli.command {
        Command::Test(a) => commands::test(a, out)?,
        Command::Onesided(a) => commands::onesided(a, out)?,
        Command::Simulate(a) => commands::simulate(a, out, err)?,
        Command::Draws(a) => commands::draws(a, out)?,
    };
    report.config.threads = cli.threads;
    let json = match &cli.command {
        Command::Test(a) => a.json.as_ref(),
        Command::Onesided(a) => a.json.as_ref(),
        Command::Simulate(a) => a.json.as_ref(),
        Command::Draws(a) => a.json.as_ref(),
    };
    if let Some(path) = json {
        report.artifacts.push(path.display().to_string());
        commands::write_report(&report, path)?;
    }
    Ok(report)
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let outcome = match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))
            .and_then(|pool| {
                // The pool runs the command on its own thread; buffer its output.
                let (mut o, mut e) = (Vec::new(), Vec::new());
                let res = pool.install(|| execute(&cli, &mut o, &mut e));
                let _ = out.write_all(&o);
                let _ = err.write_all(&e);
                res
            }),
        None => execute(&cli, out, err),
    };
    match outcome {
        Ok(_) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
