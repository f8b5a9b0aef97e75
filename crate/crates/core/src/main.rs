use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use ugibbs::experiment::{self, ExperimentConfig, RunStatus, SystemName};
use ugibbs::Error;

#[derive(Parser)]
#[command(name = "ugibbs", version, about = "Measures of maximal u-entropy for partially hyperbolic maps")]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tasks of a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the seed of the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare two run directories.
    Compare { a: PathBuf, b: PathBuf },
    /// List the available systems.
    ListSystems,
}

fn report_error(e: &Error) -> ExitCode {
    eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
    match e {
        Error::Config(_) | Error::IncompatibleSystems(..) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn csv_field(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn run(cli: &Cli, config: &Path, out: Option<&PathBuf>, seed: Option<u64>) -> Result<ExitCode, Error> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.run.seed = s;
    }
    let outcome = experiment::run(&cfg, out.map(|p| p.as_path()))?;
    match cli.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&outcome.summary)?),
        Format::Csv => {
            println!("metric,value");
            for (k, v) in experiment::headline_metrics(&outcome.summary) {
                println!("{k},{}", csv_field(&v));
            }
        }
    }
    Ok(match outcome.status {
        RunStatus::Pass => ExitCode::SUCCESS,
        RunStatus::Fail => ExitCode::from(1),
    })
}

fn dispatch(cli: &Cli) -> Result<ExitCode, Error> {
    match &cli.command {
        Command::Run { config, out, seed } => run(cli, config, out.as_ref(), *seed),
        Command::Compare { a, b } => {
            let rep = experiment::compare(a, b)?;
            match cli.format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&rep)?),
                Format::Csv => print!("{}", rep.to_csv()),
            }
            Ok(if rep.certificate_lost { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::ListSystems => {
            match cli.format {
                Format::Json => {
                    let v: Vec<_> = SystemName::ALL.iter().map(|s| json!({ "kind": s.as_str(), "description": s.description() })).collect();
                    println!("{}", serde_json::to_string_pretty(&v)?);
                }
                Format::Csv => {
                    println!("kind,description");
                    for s in SystemName::ALL {
                        println!("{},\"{}\"", s.as_str(), s.description());
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match ugibbs::par::with_workers(cli.workers, || dispatch(&cli)) {
        Ok(code) => code,
        Err(e) => report_error(&e),
    }
}
