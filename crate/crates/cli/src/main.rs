mod cli;
mod commands;
mod report;
mod run_config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use factorscope_core::DataError;
use factorscope_service::ServiceError;

use cli::{Cli, Command};
use run_config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or configuration; exit code 2.
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Core(#[from] factorscope_core::Error),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_)
            | CliError::Data(DataError::InvalidConfig(_))
            | CliError::Service(ServiceError::Config(_)) => 2,
            _ => 1,
        }
    }
}

fn init_logging(json: bool) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into());
    let builder = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr);
    if json {
        builder.json().init();
    } else {
        builder.init();
    }
}

fn run(command: &Command) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(command)?;
    match command {
        Command::Synth(_) => commands::synth(&cfg),
        Command::Factors(_) => commands::factors(&cfg),
        Command::Train(_) => commands::train(&cfg),
        Command::Serve(a) => commands::serve(&cfg, a.common.seed),
        Command::Report(_) => report::report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.log_json);
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
