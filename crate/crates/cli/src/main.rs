mod args;
mod report;
mod run;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use lookahead_core::analytics::{curve_row, AcceptanceParams};
use lookahead_core::ExecMode;

use args::{AnalyzeArgs, Cli, Command, Mode};
use run::Session;

/// Error classes mapped onto exit codes.
pub enum Failure {
    /// Bad flags or flag combinations (exit 2).
    Usage(String),
    /// Anything that goes wrong while running (exit 1).
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Decode { mode, run } => {
            let session = Session::open(run, false)?;
            let records = session.decode(mode, None)?;
            let report = report::single_report(&session, mode.name(), &records, None);
            emit(&session.args.out, &report)?;
            write_text(&session, mode.name(), &records)?;
        }
        Command::Bench { run } => {
            let session = Session::open(run, false)?;
            let mut runs = Vec::new();
            for mode in [Mode::Autoregressive, Mode::Jacobi, Mode::Lookahead] {
                let records = session.decode(mode, None)?;
                write_text(&session, mode.name(), &records)?;
                runs.push((mode.name(), records));
            }
            emit(&session.args.out, &report::bench_report(&session, &runs))?;
        }
        Command::Simulate { run } => {
            let session = Session::open(run, true)?;
            let devices = session.args.devices;
            let records = session.decode(Mode::Lookahead, Some(devices))?;
            let report = report::single_report(&session, "lookahead", &records, Some(devices));
            emit(&session.args.out, &report)?;
            write_text(&session, "lookahead", &records)?;
        }
        Command::Analyze(a) => analyze(a)?,
    }
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<(), Failure> {
    let exec = ExecMode::from(a.exec);
    let mut rows = Vec::new();
    for &alpha in &a.alpha {
        for &gamma in &a.gamma {
            for &b in &a.b {
                let params = AcceptanceParams::new(alpha, gamma, b, a.f).map_err(|e| Failure::Usage(e.to_string()))?;
                if a.trials == 0 {
                    return Err(Failure::Usage("--trials must be >= 1".into()));
                }
                rows.push(curve_row(params, a.trials, a.seed, exec).context("Monte Carlo")?);
            }
        }
    }
    emit(&a.out, &report::curve_report(&rows, a.format, a.trials, a.seed))
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, content)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::from),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// Writes `<stem>.<mode>.txt` next to the report, if there is one.
fn write_text(session: &Session, mode: &str, records: &[run::PromptRecord]) -> Result<(), Failure> {
    let Some(out) = &session.args.out else {
        return Ok(());
    };
    let path = text_path(out, mode);
    fs::write(&path, report::generated_text(session, records))
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn text_path(out: &Path, mode: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}.{mode}.txt"))
}
