use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ergodic_lab::{run, thread_count, CliError, Invocation, Task};

/// Ergodic-constant laboratory: cell problems, Mather measures, holonomic LPs and derivative checks.
#[derive(Parser, Debug)]
#[command(name = "ergodic-lab", version)]
struct Args {
    /// One of: solve-cell, mather, sweep-eps, sweep-p, derivative-check, semiconvexity, rate,
    /// lp-compare, one-sided, accept.
    task: String,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to ERGODIC_LAB_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

fn start(args: Args) -> Result<i32, CliError> {
    let task: Task = args.task.parse()?;
    if let Some(n) = thread_count(args.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    }
    let manifest = run(&Invocation { task, config_path: args.config, out: args.out })?;
    for d in &manifest.diagnostics {
        eprintln!("{d}");
    }
    Ok(manifest.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let code = match start(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
