//! Experiment driver behind the `fraclap` binary.

pub mod commands;
pub mod config;

use std::path::Path;

use clap::ValueEnum;

pub use config::{ConfigError, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Verify(String),
    Run(fraclap::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Verify(m) => write!(f, "verification failed: {m}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("output: {e}"))
    }
}

impl From<fraclap::Error> for CliError {
    fn from(e: fraclap::Error) -> Self {
        use fraclap::Error as E;
        match e {
            E::ExponentOutOfRange(_)
            | E::Geometry(_)
            | E::DegenerateMesh(_)
            | E::SupportViolation(_)
            | E::InvalidExteriorDatum(_)
            | E::ObservationTooClose { .. }
            | E::Config(_) => CliError::Config(e.to_string()),
            E::Io(m) => CliError::Config(m),
            other => CliError::Run(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Config(_) => 2,
            CliError::Run(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Forward,
    Recover,
    Runge,
    Verify,
}

pub fn run(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml())?;
    match cmd {
        Command::Forward => commands::cmd_forward(cfg, out),
        Command::Recover => commands::cmd_recover(cfg, out),
        Command::Runge => commands::cmd_runge(cfg, out),
        Command::Verify => commands::cmd_verify(cfg, out),
    }
}
