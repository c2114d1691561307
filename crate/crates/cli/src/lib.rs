//! Command-line front end for the solver crate.

pub mod args;
pub mod commands;
pub mod error;
pub mod io;
pub mod output;
pub mod plot;
pub mod simulate;

use args::{Cli, Command};
use error::{CliError, CliResult};

/// Runs one parsed invocation inside a pool of `--threads` workers.
pub fn run(cli: &Cli) -> CliResult<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Input("threads must be >= 1".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Fit(a) => commands::cmd_fit(a),
        Command::Tune(a) => commands::cmd_tune(a),
        Command::SelectK(a) => commands::cmd_select_k(a),
        Command::Simulate(a) => simulate::cmd_simulate(a),
        Command::Evaluate(a) => commands::cmd_evaluate(a),
        Command::Generate(a) => commands::cmd_generate(a),
    })
}

/// Parses `argv`, runs it and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::Parser;
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("rsodc: {e}");
            e.exit_code()
        }
    }
}
