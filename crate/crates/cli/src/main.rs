//! `dephasing`: simulate, calibrate and analyze dephasing channels.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dephasing_core::experiment::{analyze_table, run_calibration, run_simulation, CoherenceTable};

use crate::config::{load_config, split_overrides, ConfigError};

#[derive(Debug, Parser)]
#[command(name = "dephasing", version, about = "Dephasing channels driven by telegraph and Ornstein-Uhlenbeck noise")]
#[command(after_help = "Any config key can be overridden as --section.key=value, e.g. --process.gamma=0.5")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the ensemble and write the coherence table.
    Simulate {
        /// TOML config; defaults apply when omitted.
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Output directory (overrides output.dir).
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Also write a matplotlib script for the table.
        #[arg(long)]
        plot: bool,
    },
    /// Fit N and p from a simulated static-noise reference curve.
    Calibrate {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Classify a coherence table as Markovian or not.
    Analyze {
        /// Table with `t` and `D` (or `C_mc_abs`) columns.
        table: PathBuf,
        /// Revival threshold; defaults to 3 x the largest mc_stderr.
        #[arg(long)]
        tolerance: Option<f64>,
        /// Write the report here as well as to stdout.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

/// Failure with its exit code.
#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn report(&self) -> String {
        let (kind, message) = match self {
            Failure::Config(m) => ("config", m),
            Failure::Runtime(m) => ("runtime", m),
        };
        serde_json::json!({ "error": { "kind": kind, "message": message, "exit_code": self.code() } }).to_string()
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<dephasing_core::Error> for Failure {
    fn from(e: dephasing_core::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let (args, overrides) = match split_overrides(args) {
        Ok(v) => v,
        Err(e) => return fail(e.into()),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => return fail(Failure::Config(e.to_string().trim_end().to_string())),
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli.command, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(f),
    }
}

fn fail(f: Failure) -> ExitCode {
    eprintln!("{}", f.report());
    ExitCode::from(f.code())
}

fn run(command: Command, overrides: &[(String, String)]) -> Result<(), Failure> {
    match command {
        Command::Simulate { config, out, plot } => {
            let (mut cfg, spectrum) = load_config(config.as_deref(), overrides)?;
            if let Some(dir) = out {
                cfg.output.dir = dir.to_string_lossy().into_owned();
            }
            cfg.output.plot_script |= plot;
            let result = run_simulation(&cfg, spectrum.as_ref())?;
            let written = output::write_simulation(&cfg, &result)?;
            print_written(&written);
        }
        Command::Calibrate { config, out } => {
            let (mut cfg, spectrum) = load_config(config.as_deref(), overrides)?;
            if let Some(dir) = out {
                cfg.output.dir = dir.to_string_lossy().into_owned();
            }
            if !cfg.apparatus.enabled {
                return Err(Failure::Config("calibrate requires apparatus.enabled = true".into()));
            }
            cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
            let result = run_calibration(&cfg, spectrum.as_ref())?;
            let written = output::write_calibration(&cfg, &result)?;
            print_written(&written);
        }
        Command::Analyze { table, tolerance, out } => {
            if !overrides.is_empty() {
                return Err(Failure::Config("analyze takes no config overrides".into()));
            }
            let text = std::fs::read_to_string(&table).map_err(|e| io_error(&table, e))?;
            let parsed =
                CoherenceTable::parse(&text).map_err(|e| Failure::Runtime(format!("{}: {e}", table.display())))?;
            let report = analyze_table(&parsed, tolerance)?;
            let doc = output::report_toml(&report)?;
            print!("{doc}");
            if let Some(path) = out {
                std::fs::write(&path, doc).map_err(|e| io_error(&path, e))?;
            }
        }
    }
    Ok(())
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}
