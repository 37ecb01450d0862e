mod commands;
mod error;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{AnalysisConfig, DataConfig, Format, Sink};
use error::{CliError, Result};

/// Regression discontinuity analysis for small studies.
#[derive(Debug, Parser)]
#[command(name = "rdss", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample size, count below the cutoff, rule-of-thumb bandwidth and DISS.
    Diss {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Estimate the jump at the cutoff with each selected method.
    Analyze {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.10)]
        alpha: f64,
        /// Comma-separated method ids such as IK/CV,AK/FLCI,LR.
        #[arg(long)]
        methods: Option<String>,
        /// Minimum observations per side in the local-randomization window.
        #[arg(long, default_value_t = 5)]
        lr_min: usize,
        /// Curvature bound for the AKM methods.
        #[arg(long)]
        m_bound: Option<f64>,
        /// Seed for Monte Carlo permutation draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run one Monte Carlo cell from a JSON spec.
    Simulate {
        /// Cell spec (JSON).
        #[arg(long, required_unless_present = "table_1")]
        input: Option<PathBuf>,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Directory for result.json and replications.csv; JSON to stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the sample-size calibration grid instead of running a cell.
        #[arg(long = "table-1", conflicts_with = "input")]
        table_1: bool,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "x")]
    x_col: String,
    #[arg(long, default_value = "y")]
    y_col: String,
    #[arg(long, allow_negative_numbers = true)]
    cutoff: f64,
    /// Reject rows with missing or non-numeric values instead of dropping them.
    #[arg(long)]
    strict: bool,
}

impl From<DataArgs> for DataConfig {
    fn from(a: DataArgs) -> Self {
        DataConfig {
            input: a.input,
            x_col: a.x_col,
            y_col: a.y_col,
            cutoff: a.cutoff,
            strict: a.strict,
        }
    }
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Output file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl From<OutputArgs> for Sink {
    fn from(a: OutputArgs) -> Self {
        Sink {
            format: a.format,
            out: a.out,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Diss { data, output } => {
            let report = commands::diss(data.into())?;
            Sink::from(output).emit(&report, std::slice::from_ref(&report.row))
        }
        Command::Analyze {
            data,
            alpha,
            methods,
            lr_min,
            m_bound,
            seed,
            output,
        } => {
            let config = AnalysisConfig {
                data: data.into(),
                alpha,
                methods: AnalysisConfig::resolve_methods(methods.as_deref(), lr_min, m_bound)?,
                lr_min,
                m_bound,
                seed,
            };
            let report = commands::analyze(config)?;
            Sink::from(output).emit(&report, &report.results)
        }
        Command::Simulate {
            input,
            seed,
            threads,
            out,
            table_1,
            format,
        } => {
            if table_1 {
                let report = commands::calibration()?;
                return Sink { format, out }.emit(&report, &report.rows);
            }
            let path = input.ok_or_else(|| CliError::Config("--input is required".into()))?;
            let spec = commands::load_spec(&path)?;
            let result = commands::simulate(spec, seed, threads)?;
            match out {
                Some(dir) => commands::write_simulation(&result, &dir),
                None => Sink { format, out: None }.emit(&result, &commands::rep_rows(&result)),
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
