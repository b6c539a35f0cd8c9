//! `squeezetrack` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O failure, 4 malformed
//! input, 5 numerical or statistical precondition failure.

// Negated float comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "squeezetrack",
    version,
    about = "Particle-tracking simulation and analysis with squeezed-light detection"
)]
pub struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for ensemble and windowed work.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate one trajectory and its detected records.
    Simulate,
    /// MSD, power-law fit and viscoelastic moduli of a position file.
    Analyze {
        input: PathBuf,
        #[command(flatten)]
        mapping: MappingArgs,
    },
    /// Coherent versus squeezed Monte Carlo comparison.
    Compare,
    /// Sliding-window α(t) of a position file.
    Track {
        input: PathBuf,
        /// Window length, s.
        #[arg(long)]
        window: Option<f64>,
        /// Window stride, s.
        #[arg(long)]
        stride: Option<f64>,
        /// Also write a Vega-Lite plot description.
        #[arg(long)]
        plot: bool,
        #[command(flatten)]
        mapping: MappingArgs,
    },
}

/// Reading a delimited third-party file instead of a native position file.
#[derive(Args, Debug, Default)]
pub struct MappingArgs {
    /// Column holding the positions: zero-based index or header name.
    #[arg(long)]
    pub column: Option<String>,
    /// Field delimiter; `whitespace` splits on runs of blanks.
    #[arg(long, default_value = ",")]
    pub delimiter: String,
    /// Position unit: m, mm, um or nm.
    #[arg(long, default_value = "um")]
    pub unit: String,
    /// Sample interval, s (required with --column).
    #[arg(long)]
    pub dt: Option<f64>,
    /// The first non-comment row names the columns.
    #[arg(long)]
    pub has_header: bool,
    /// White position noise per sample, μm; overrides the file's value.
    #[arg(long)]
    pub noise_std: Option<f64>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Parse(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Parse(_) => 4,
            CliError::Numeric(_) => 5,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Parse(m) => write!(f, "malformed input: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<squeezetrack::Error> for CliError {
    fn from(e: squeezetrack::Error) -> Self {
        use squeezetrack::Error as E;
        let msg = e.to_string();
        match e.root() {
            E::InvalidParameter { .. } => CliError::Config(msg),
            E::Io(_) => CliError::Io(msg),
            E::Parse { .. } => CliError::Parse(msg),
            E::InsufficientData(_) | E::Numerical(_) | E::Run { .. } => CliError::Numeric(msg),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Config("--jobs: must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    }
    let loaded = config::load(cli.config.as_deref())?;
    let ctx = commands::Context::new(&loaded, cli.seed, cli.out.as_deref());
    match &cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Analyze { input, mapping } => commands::analyze(&ctx, input, mapping),
        Command::Compare => commands::compare(&ctx),
        Command::Track {
            input,
            window,
            stride,
            plot,
            mapping,
        } => commands::track(&ctx, input, mapping, *window, *stride, *plot),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("squeezetrack: {e}");
            ExitCode::from(e.code())
        }
    }
}
