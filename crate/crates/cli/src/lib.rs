//! Library side of the `mutarjem` command-line tool. The binary is a thin
//! wrapper around [`run`], which keeps the commands testable in-process.

pub mod args;
pub mod backend;
pub mod commands;

use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command};

/// Route `log` output to `logging_file` when given, else to stderr, with
/// timestamps. Only the first call in a process takes effect.
pub fn init_logging(logging_file: Option<&Path>) -> Result<()> {
    let mut builder = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"));
    builder.format_timestamp_millis();
    if let Some(path) = logging_file {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening log file {}", path.display()))?;
        builder.target(env_logger::Target::Pipe(Box::new(file)));
    } else {
        builder.target(env_logger::Target::Stderr);
    }
    // a logger may already be installed when running under a test harness
    let _ = builder.try_init();
    Ok(())
}

fn logging_file(cmd: &Command) -> Option<&Path> {
    match cmd {
        Command::Interactive(a) => a.decode.logging_file.as_deref(),
        Command::Translate(a) => a.decode.logging_file.as_deref(),
        Command::Score(a) => a.logging_file.as_deref(),
        Command::Corpus(_) => None,
    }
}

/// Parse `argv` and execute the chosen command against the given streams.
pub fn run(argv: Vec<String>, stdin: &mut impl io::BufRead, stdout: &mut impl Write) -> Result<()> {
    let cli = Cli::try_parse_from(args::expand_short_aliases(argv))?;
    init_logging(logging_file(&cli.command))?;
    match &cli.command {
        Command::Interactive(a) => commands::interactive(a, stdin, stdout),
        Command::Translate(a) => commands::translate(a, stdout),
        Command::Score(a) => commands::score(a, stdout),
        Command::Corpus(c) => commands::corpus(c, stdout),
    }?;
    stdout.flush()?;
    Ok(())
}
