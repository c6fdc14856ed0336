//! Command-line interface. Exit codes: 0 success, 2 config error, 3 runtime
//! stage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use neurotrack_core::metrics::MetricsConfig;
use neurotrack_core::scene::DiskScene;

use crate::config::{load_scene, BackendChoice, RunConfig};
use crate::error::AppError;
use crate::runner::{self, backend_name, EvalSummary};

#[derive(Debug, Parser)]
#[command(name = "neurotrack", version, about = "Event-camera detection and spiking filter tracking on a synthetic rotating disk")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a scene to PGM frames plus truth.json and scene.json.
    Synth {
        /// Scene JSON, or a run config whose scene is rendered.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run detection, validation and tracking and write the result files.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Directory written by `synth`; frames are rendered in memory if omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        backend: Option<BackendChoice>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Feed one measurement sequence to the dense and spiking filters.
    FilterBench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute the metrics of a results directory against a truth file.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
}

fn config_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn load_run(path: &Path, backend: Option<BackendChoice>, seed: Option<u64>) -> Result<crate::config::ResolvedRun, AppError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(b) = backend {
        cfg.backend = b;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.resolve(config_dir(path))
}

/// Prints pretty JSON to stdout; a closed pipe ends output quietly.
fn emit<T: serde::Serialize>(v: &T) -> Result<(), AppError> {
    let mut out = std::io::stdout().lock();
    let written = serde_json::to_writer_pretty(&mut out, v)
        .map_err(std::io::Error::from)
        .and_then(|()| writeln!(out));
    match written {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(AppError::Runtime(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

/// A scene file, or a run config (any file with a `seed` key) whose scene is used.
fn load_synth_scene(path: &Path) -> Result<DiskScene, AppError> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
    let is_run = serde_json::from_str::<serde_json::Value>(&text).is_ok_and(|v| v.get("seed").is_some());
    if is_run {
        Ok(RunConfig::load(path)?.resolve(config_dir(path))?.scene)
    } else {
        load_scene(path)
    }
}

pub fn execute(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Synth { config, out } => {
            let scene = load_synth_scene(&config)?;
            let n = runner::synth(&scene, &out)?;
            eprintln!("wrote {n} frames to {}", out.display());
        }
        Command::Run { config, data, out, backend, seed } => {
            let run = load_run(&config, backend, seed)?;
            let out = out
                .or_else(|| run.config.output.as_ref().map(|o| config_dir(&config).join(o)))
                .ok_or_else(|| AppError::Config(String::from("no output directory: pass --out or set \"output\"")))?;
            let result = runner::run(&run, data.as_deref(), &out)?;
            if let Some(acc) = result.train_accuracy {
                eprintln!("validator training accuracy {acc:.4}");
            }
            for r in &result.runs {
                eprintln!("{} backend: {} -> {}", backend_name(r.summary.backend), r.summary.files.join(", "), r.dir.display());
                emit(&r.summary.objects)?;
            }
            if let Some(c) = &result.comparison {
                emit(c)?;
            }
        }
        Command::FilterBench { config, out, seed } => {
            let run = load_run(&config, None, seed)?;
            let (_, deltas) = runner::filter_bench(&run, &out)?;
            emit(&deltas)?;
        }
        Command::Eval { results, truth } => {
            let report = runner::eval(&results, &truth, &MetricsConfig::default())?;
            emit(&EvalSummary::from(&report))?;
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
