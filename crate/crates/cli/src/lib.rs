//! `p2va` command-line interface and HTTP API.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

pub mod backends;
pub mod commands;
pub mod config;
pub mod server;

use std::ffi::OsString;
use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use crate::config::{Cli, Command, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

async fn dispatch(cli: Cli) -> Result<(), CliError> {
    let bind = match &cli.command {
        Command::Serve { bind } => bind.as_deref(),
        _ => None,
    };
    let cfg = RunConfig::resolve(&cli.global, bind)?;
    match cli.command {
        Command::Convert { personas, transcripts } => {
            let dir = commands::convert(&cfg, &personas, &transcripts).await?;
            println!("{}", dir.display());
        }
        Command::Render { record } => {
            let record = commands::read_record(&cfg, &record)?;
            println!("{}", commands::render(&cfg, &record).await?.text);
        }
        Command::Synthesize {
            run,
            description,
            text,
            wav,
        } => match (run, description, text) {
            (Some(run), _, _) => commands::synthesize_run(&cfg, &run).await?,
            (None, Some(d), Some(t)) => {
                commands::synthesize_one(&cfg, &d, &t, &wav).await?;
                println!("{}", wav.display());
            }
            _ => return Err(CliError::Usage("give --run, or --description with --text".into())),
        },
        Command::Eval { run, scores, judge } => {
            print!("{}", commands::eval(&cfg, &run, scores.as_deref(), judge).await?);
        }
        Command::Audit { run, tone_groups } => {
            print!("{}", commands::audit(&cfg, &run, tone_groups.as_deref())?);
        }
        Command::Serve { .. } => server::serve(&cfg).await?,
    }
    Ok(())
}

/// Log level from `RUST_LOG` (a bare level such as `debug`), else info when serving and warn otherwise.
fn init_tracing(serving: bool) {
    use tracing_subscriber::filter::LevelFilter;
    let default = if serving { LevelFilter::INFO } else { LevelFilter::WARN };
    let level = std::env::var("RUST_LOG")
        .ok()
        .and_then(|v| v.parse::<LevelFilter>().ok())
        .unwrap_or(default);
    let _ = tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .try_init();
}

/// Parses `args` and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    init_tracing(matches!(cli.command, Command::Serve { .. }));
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(1);
        }
    };
    match runtime.block_on(dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
