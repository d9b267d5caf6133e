mod commands;
mod config;
mod expr;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::config::{parse_override, ConfigError, RunConfig};

/// Antiplane phase-field fracture: solves, blow-ups, stability audits.
#[derive(Debug, Parser)]
#[command(name = "griffith", version)]
struct Cli {
    command: Command,
    /// TOML run configuration.
    config: PathBuf,
    /// Override a config value, e.g. `--set material.g_c=2`.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; replaces `output.directory`.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Static,
    Quasistatic,
    Blowup,
    Sif,
    Stability,
    IdentityCheck,
    DemoLoadCollapse,
    Sweep,
}

impl Command {
    pub fn from_name(name: &str) -> Option<Self> {
        Self::from_str(name, false).ok()
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::Static => "static",
            Command::Quasistatic => "quasistatic",
            Command::Blowup => "blowup",
            Command::Sif => "sif",
            Command::Stability => "stability",
            Command::IdentityCheck => "identity-check",
            Command::DemoLoadCollapse => "demo-load-collapse",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{kind}: {msg}")]
    Numerical { kind: &'static str, msg: String },
    #[error(transparent)]
    Io(#[from] griffith_core::io::IoError),
}

impl CliError {
    pub fn numerical(kind: &'static str, err: impl std::fmt::Display) -> Self {
        CliError::Numerical {
            kind,
            msg: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical { kind, .. } => kind,
            CliError::Io(_) => "io",
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            kind: self.kind().to_string(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
    pub exit_code: u8,
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut overrides = cli
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(out) = &cli.out {
        let dir = toml::Value::String(out.to_string_lossy().into_owned());
        overrides.push(("output.directory".to_string(), dir));
    }
    Ok(RunConfig::load(&cli.config, &overrides)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|cfg| commands::run(cli.command, &cfg, None));
    match result {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let rec = e.record();
            eprintln!("{}", serde_json::to_string(&rec).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(rec.exit_code)
        }
    }
}
