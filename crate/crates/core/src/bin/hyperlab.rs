use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hyperlab::config::validate_config;
use hyperlab::experiment::{run_experiment, RunError};

/// Exit codes: 0 all criteria pass, 1 some criterion fails, 2 invalid
/// config or usage, 3 pipeline or I/O failure.
#[derive(Parser)]
#[command(name = "hyperlab", version, about = "Desk-scale experiments on operators with unimodular eigenvectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipelines of a config and write reports.
    Run(RunArgs),
    /// Check a config and list every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-run the config stored in a report directory and compare summaries.
    Replay {
        /// Directory written by an earlier `run`.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "hyperlab-out")]
    out: PathBuf,
    /// Overrides the ergodicity and density horizons.
    #[arg(long)]
    horizon: Option<u64>,
}

fn init_threads() {
    if let Some(n) = std::env::var("HYPERLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn read(path: &PathBuf) -> Result<String, ExitCode> {
    fs::read_to_string(path).map_err(|e| {
        eprintln!("cannot read {}: {e}", path.display());
        ExitCode::from(2)
    })
}

fn parse(text: &str, seed: Option<u64>, horizon: Option<u64>) -> Result<hyperlab::config::ExperimentConfig, ExitCode> {
    // Overrides go in before validation so `--seed` can supply a missing seed.
    let mut value: toml::Table = match text.parse() {
        Ok(v) => v,
        Err(_) => return validate_config(text).map_err(report_violations),
    };
    if let Some(s) = seed {
        value.insert("seed".into(), toml::Value::Integer(s as i64));
    }
    if let Some(h) = horizon {
        for table in ["ergodicity", "density"] {
            if let Some(toml::Value::Table(t)) = value.get_mut(table) {
                t.insert("horizon".into(), toml::Value::Integer(h as i64));
            }
        }
    }
    validate_config(&value.to_string()).map_err(report_violations)
}

fn report_violations(v: Vec<hyperlab::config::Violation>) -> ExitCode {
    for x in &v {
        eprintln!("{x}");
    }
    ExitCode::from(2)
}

fn run_error(e: RunError) -> ExitCode {
    eprintln!("{e}");
    match e {
        RunError::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(3),
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { config } => read(&config).and_then(|text| {
            validate_config(&text).map_err(report_violations)?;
            println!("ok");
            Ok(ExitCode::SUCCESS)
        }),
        Command::Run(args) => read(&args.config)
            .and_then(|text| parse(&text, args.seed, args.horizon))
            .and_then(|cfg| run_experiment(&cfg, &args.out).map_err(run_error))
            .map(|report| {
                for (name, v) in report.summary["pipelines"].as_object().into_iter().flatten() {
                    let verdict = if v["pass"] == true { "PASS" } else { "FAIL" };
                    println!("{name}: {verdict}");
                }
                println!("reports written to {}", args.out.display());
                if report.pass() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }),
        Command::Replay { out } => replay(out),
    };
    result.unwrap_or_else(|code| code)
}

fn replay(out: PathBuf) -> Result<ExitCode, ExitCode> {
    let text = read(&out.join("config.toml"))?;
    let before = read(&out.join("summary.json"))?;
    let cfg = validate_config(&text).map_err(report_violations)?;
    let scratch = out.join("replay");
    let report = run_experiment(&cfg, &scratch).map_err(run_error)?;
    if report.summary_text() == before {
        println!("summary reproduced byte for byte");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("summary differs from {}", out.join("summary.json").display());
        Ok(ExitCode::from(1))
    }
}
