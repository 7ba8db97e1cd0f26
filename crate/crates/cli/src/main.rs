//! `qds`: run the protocol, attack it, evaluate the security formulas and
//! manage key stores.

mod analyze;
mod attack;
mod config;
mod keytool;
mod run;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::config::FileConfig;

#[derive(Debug, Parser)]
#[command(
    name = "qds",
    version,
    about = "Signatures from QKD-distributed keys: simulator and analysis tool"
)]
struct Cli {
    /// Flat TOML file of parameters; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "QDS_SEED")]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the honest protocol end to end
    Run(run::RunArgs),
    /// Monte Carlo campaign of one attack
    Attack(attack::AttackArgs),
    /// Evaluate a security formula
    Analyze(analyze::AnalyzeArgs),
    /// Manage a key store file
    Keytool(keytool::KeytoolArgs),
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or parameters: exit 2.
    Usage(String),
    /// A rejection or unmet expectation: exit 1.
    Rejected(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Rejected(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Rejected(m) => f.write_str(m),
        }
    }
}

/// Shared context of one invocation.
pub struct Context {
    pub file: FileConfig,
    pub seed: u64,
    pub format: Format,
}

/// What a command prints, and how it exits.
pub struct Output {
    pub json: Value,
    pub text: String,
    pub code: u8,
}

impl Output {
    pub fn ok(json: Value, text: String) -> Self {
        Self {
            json,
            text,
            code: 0,
        }
    }
}

fn dispatch(cli: &Cli) -> Result<Output, CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let ctx = Context {
        file,
        seed,
        format: cli.format,
    };
    match &cli.command {
        Command::Run(a) => run::cmd_run(a, &ctx),
        Command::Attack(a) => attack::cmd_attack(a, &ctx),
        Command::Analyze(a) => analyze::cmd_analyze(a, &ctx),
        Command::Keytool(a) => keytool::cmd_keytool(a, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(out) => {
            match cli.format {
                Format::Json => println!(
                    "{}",
                    serde_json::to_string_pretty(&out.json).expect("reports serialize")
                ),
                Format::Text => print!("{}", out.text),
            }
            ExitCode::from(out.code)
        }
        Err(e) => {
            eprintln!("qds: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
