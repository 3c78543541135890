//! `polyeval` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use polyeval_core::{make_run_id, CacheMode, ProviderKind};

use crate::config::{load_run_config, LoadError, Overrides};
use crate::orchestrator::{Orchestrator, RunError, RunSummary};
use crate::report::{load_results, render_leaderboard, ReportError, ReportFormat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DEGRADED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "polyeval", version, about = "Evaluate code-generation models on a task suite")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a run config and its task suite; prints nothing when valid.
    Validate {
        config: PathBuf,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Execute a run and print its leaderboard.
    Run {
        config: PathBuf,
        #[command(flatten)]
        knobs: Knobs,
        /// Use this run id instead of the config's or a fresh one.
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Continue an interrupted run, retrying failed items.
    Resume {
        run_dir: PathBuf,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Render the leaderboard of a finished run.
    Report {
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        format: ReportFormat,
        /// Write to this file instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// List supported provider kinds.
    Providers,
}

#[derive(Debug, Args)]
struct Knobs {
    /// Override the config's cache mode.
    #[arg(long, value_parser = parse_cache_mode)]
    cache: Option<CacheMode>,
    /// Override per_provider_concurrency.
    #[arg(long)]
    concurrency: Option<u32>,
}

fn parse_cache_mode(s: &str) -> Result<CacheMode, String> {
    match s {
        "record" => Ok(CacheMode::Record),
        "replay" => Ok(CacheMode::Replay),
        "bypass" => Ok(CacheMode::Bypass),
        other => Err(format!("unknown cache mode {other:?} (record, replay, bypass)")),
    }
}

impl Knobs {
    fn overrides(&self, run_id: Option<String>) -> Overrides {
        Overrides {
            cache_mode: self.cache,
            per_provider_concurrency: self.concurrency,
            run_id,
        }
    }
}

fn fresh_run_id() -> String {
    make_run_id(chrono::Utc::now(), rand::random())
}

/// Runs the CLI with explicit streams and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let rendered = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(failure) => {
            let _ = writeln!(err, "polyeval: {}", failure.message);
            failure.code
        }
    }
}

struct Failure {
    code: i32,
    message: String,
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: e.to_string(),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let code = match e {
            RunError::Invalid { .. } | RunError::ConfigChanged { .. } | RunError::NoManifest(_) => EXIT_INVALID,
            _ => EXIT_INTERNAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: e.to_string(),
        }
    }
}

fn internal(message: impl ToString) -> Failure {
    Failure {
        code: EXIT_INTERNAL,
        message: message.to_string(),
    }
}

fn orchestrator() -> Result<Orchestrator, Failure> {
    Orchestrator::from_env().map_err(internal)
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32, Failure> {
    match command {
        Command::Validate { config, knobs } => {
            load_run_config(&config, &knobs.overrides(None), || "validate".to_string())?;
            Ok(EXIT_OK)
        }
        Command::Run { config, knobs, run_id } => {
            let config = load_run_config(&config, &knobs.overrides(run_id), fresh_run_id)?;
            let summary = orchestrator()?.execute_run(&config)?;
            finish(&summary, out)
        }
        Command::Resume { run_dir, knobs } => {
            let summary = orchestrator()?.resume_with(&run_dir, &knobs.overrides(None))?;
            finish(&summary, out)
        }
        Command::Report { run_dir, format, output } => {
            let text = render_leaderboard(&load_results(&run_dir)?, format);
            match output {
                Some(path) => write_file(&path, &text)?,
                None => out.write_all(text.as_bytes()).map_err(internal)?,
            }
            Ok(EXIT_OK)
        }
        Command::Providers => {
            for kind in ProviderKind::ALL {
                writeln!(out, "{:<20}{}", kind.as_str(), kind.description()).map_err(internal)?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure {
        code: EXIT_INVALID,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn finish(summary: &RunSummary, out: &mut dyn Write) -> Result<i32, Failure> {
    writeln!(out, "run directory: {}", summary.run_dir.display()).map_err(internal)?;
    let results = load_results(&summary.run_dir)?;
    out.write_all(render_leaderboard(&results, ReportFormat::Table).as_bytes())
        .map_err(internal)?;
    if summary.manifest.degraded {
        writeln!(out, "run degraded: more than half of the items failed").map_err(internal)?;
        Ok(EXIT_DEGRADED)
    } else {
        Ok(EXIT_OK)
    }
}
