use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tsdyn_cli::error::CliError;
use tsdyn_cli::{commands, list_examples, prepare, summary_path, verify, with_pool, RunRequest};

/// Delay dynamic equations on time scales: simulation, fundamental
/// solutions and stability certificates.
#[derive(Parser)]
#[command(name = "tsdyn", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the equation from t0 and write `t,x` rows.
    Simulate(RunArgs),
    /// Compute fundamental-solution columns and a per-column summary.
    Fundamental(RunArgs),
    /// Evaluate the stability conditions and print the certificate.
    Classify(RunArgs),
    /// Run the checks registered for a preset.
    VerifyExample {
        name: String,
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// List the presets with their parameters.
    ListExamples,
}

#[derive(Args)]
struct RunArgs {
    /// Preset name (see `list-examples`).
    preset: Option<String>,
    /// Preset parameters as `key=value`.
    params: Vec<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    horizon: Option<f64>,
    /// Largest step on dense parts of the scale.
    #[arg(long)]
    step: Option<f64>,
    /// Number of fundamental-solution columns.
    #[arg(long = "s-samples")]
    s_samples: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    parallel: Option<usize>,
    /// Strict conditions must hold below `1 - margin`.
    #[arg(long)]
    margin: Option<f64>,
}

impl From<RunArgs> for RunRequest {
    fn from(a: RunArgs) -> Self {
        RunRequest {
            preset: a.preset,
            params: a.params,
            config: a.config,
            horizon: a.horizon,
            step: a.step,
            s_samples: a.s_samples,
            out: a.out,
            parallel: a.parallel,
            margin: a.margin,
        }
    }
}

fn emit(text: &str, path: Option<&PathBuf>) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => match std::io::stdout().write_all(text.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        },
    }
}

fn run(cmd: Cmd) -> Result<ExitCode, CliError> {
    match cmd {
        Cmd::Simulate(a) => {
            let p = prepare(&a.into())?;
            let csv = with_pool(p.parallel, || commands::simulate(&p.problem, p.h_max))??;
            emit(&csv, p.output.as_ref())?;
        }
        Cmd::Fundamental(a) => {
            let p = prepare(&a.into())?;
            let csv = with_pool(p.parallel, || commands::fundamental(&p.problem, p.h_max, &p.s_samples))??;
            match &p.output {
                Some(path) => {
                    emit(&csv.long, Some(path))?;
                    emit(&csv.summary, Some(&summary_path(path)))?;
                }
                None => emit(&format!("{}\n{}", csv.long, csv.summary), None)?,
            }
        }
        Cmd::Classify(a) => {
            let p = prepare(&a.into())?;
            let cert = with_pool(p.parallel, || commands::classify_problem(&p.problem, p.h_max, p.margin))??;
            emit(&cert.to_kv(), p.output.as_ref())?;
        }
        Cmd::VerifyExample { name, parallel } => {
            if parallel == Some(0) {
                return Err(CliError::Config("--parallel needs at least one worker".into()));
            }
            let checks = with_pool(parallel, || verify::verify_example(&name))??;
            let mut text = String::new();
            for c in &checks {
                text.push_str(&c.line());
                text.push('\n');
            }
            emit(&text, None)?;
            if checks.iter().any(|c| !c.passed) {
                return Ok(ExitCode::from(1));
            }
        }
        Cmd::ListExamples => emit(&list_examples(), None)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("ERROR usage: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("ERROR {}: {}", e.code(), e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_status() as u8)
        }
    }
}
