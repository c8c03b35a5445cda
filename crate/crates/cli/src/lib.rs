//! Experiment runner behind the `ergodic-lab` binary.
//!
//! A run reads one JSON config, executes one task, writes its files through a single
//! [`RunDir`] and closes with `manifest.json`, which lists every file in the directory and
//! one `CHECK <name> PASS|FAIL <value> <tolerance>` line per check.

pub mod config;
pub mod plotdata;
mod tasks;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ergodic_core::error::LabError;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{ExperimentConfig, Task};

pub const MANIFEST: &str = "manifest.json";
pub const DEFAULT_OUTPUT_DIR: &str = "results";
pub const THREADS_ENV: &str = "ERGODIC_LAB_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{message}")]
    Numerical { message: String, diagnostics: Vec<String> },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io { .. } => 2,
            CliError::Numerical { .. } => 3,
        }
    }

    fn diagnostics(&self) -> Vec<String> {
        match self {
            CliError::Numerical { diagnostics, .. } => diagnostics.clone(),
            _ => Vec::new(),
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        if e.is_validation() {
            return CliError::Validation(e.to_string());
        }
        match e {
            LabError::Numerical { message, diagnostics } => CliError::Numerical { message, diagnostics },
            LabError::Io(source) => CliError::Io { path: PathBuf::new(), source },
            other => CliError::Numerical { message: other.to_string(), diagnostics: Vec::new() },
        }
    }
}

/// The only writer of a run directory; remembers every file it produced.
pub struct RunDir {
    root: PathBuf,
    files: BTreeSet<String>,
}

impl RunDir {
    /// Opens `root`, which must be absent, empty, or a previous run directory. Files listed by
    /// a previous manifest are removed so that the new manifest covers the whole directory.
    pub fn open(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        let entries: Vec<String> = std::fs::read_dir(root)
            .map_err(|e| CliError::io(root, e))?
            .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::io(root, e))?;
        if !entries.is_empty() {
            let previous = previous_files(&root.join(MANIFEST)).ok_or_else(|| {
                CliError::Validation(format!("output directory {} is not empty and holds no manifest", root.display()))
            })?;
            if let Some(stray) = entries.iter().find(|e| !previous.contains(*e)) {
                return Err(CliError::Validation(format!(
                    "output directory {} holds `{stray}`, which no previous run produced",
                    root.display()
                )));
            }
            for name in &entries {
                let path = root.join(name);
                std::fs::remove_file(&path).map_err(|e| CliError::io(&path, e))?;
            }
        }
        Ok(RunDir { root: root.to_path_buf(), files: BTreeSet::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.insert(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Numerical { message: format!("serializing {name}: {e}"), diagnostics: vec![] })?;
        self.write(name, (text + "\n").as_bytes())
    }

    /// Records files written by a library routine that takes the directory directly.
    pub fn record(&mut self, names: Vec<String>) {
        self.files.extend(names);
    }

    pub fn files(&self) -> Vec<String> {
        self.files.iter().cloned().collect()
    }
}

fn previous_files(manifest: &Path) -> Option<BTreeSet<String>> {
    let text = std::fs::read_to_string(manifest).ok()?;
    let value: serde_json::Value = serde_json::from_str(&text).ok()?;
    let files = value.get("files")?.as_array()?;
    files.iter().map(|f| f.as_str().map(str::to_string)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Pass,
    Fail,
    ValidationError,
    NumericalError,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub artifact: &'static str,
    pub version: &'static str,
    pub task: String,
    pub config_sha256: String,
    pub seed: u64,
    pub started: String,
    pub finished: String,
    pub status: RunStatus,
    /// Sorted; includes the manifest itself.
    pub files: Vec<String>,
    pub checks: Vec<String>,
    pub diagnostics: Vec<String>,
}

impl RunManifest {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            RunStatus::Pass => 0,
            RunStatus::Fail => 1,
            RunStatus::ValidationError => 2,
            RunStatus::NumericalError => 3,
        }
    }
}

/// Checks and console lines produced by a task.
#[derive(Debug, Default)]
pub struct TaskOutput {
    pub checks: Vec<String>,
    pub passed: bool,
    pub console: Vec<String>,
}

/// RFC 3339 timestamp; `SOURCE_DATE_EPOCH` pins it for reproducible manifests.
fn timestamp() -> String {
    let pinned = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse::<i64>().ok());
    let t = match pinned.and_then(|s| chrono::DateTime::from_timestamp(s, 0)) {
        Some(t) => t,
        None => chrono::Utc::now(),
    };
    t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Resolves the worker count from `--threads`, then `ERGODIC_LAB_THREADS`; `None` keeps rayon's default.
pub fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    let n = match (flag, std::env::var(THREADS_ENV)) {
        (Some(n), _) => n,
        (None, Ok(s)) => s
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Validation(format!("{THREADS_ENV} must be a positive integer, got `{s}`")))?,
        (None, Err(_)) => return Ok(None),
    };
    if n == 0 {
        return Err(CliError::Validation("thread count must be positive".into()));
    }
    Ok(Some(n))
}

/// Everything a run needs besides the config text.
pub struct Invocation {
    pub task: Task,
    pub config_path: PathBuf,
    pub out: Option<PathBuf>,
}

/// Runs one task and writes its manifest. Returns the manifest, or an error when the run
/// directory itself could not be set up (no manifest exists in that case).
pub fn run(inv: &Invocation) -> Result<RunManifest, CliError> {
    let started = timestamp();
    let text = std::fs::read(&inv.config_path).map_err(|e| CliError::io(&inv.config_path, e))?;
    let config_sha256 = format!("{:x}", Sha256::digest(&text));
    let parsed = std::str::from_utf8(&text)
        .map_err(|_| CliError::Validation("config is not UTF-8".into()))
        .and_then(ExperimentConfig::from_json_str);
    let out_dir = inv
        .out
        .clone()
        .or_else(|| parsed.as_ref().ok().and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    let mut dir = RunDir::open(&out_dir)?;
    let seed = parsed.as_ref().map(|c| c.seed).unwrap_or(0);
    let base = inv.config_path.parent().map(Path::to_path_buf);

    let result = parsed.and_then(|cfg| match cfg.task {
        Some(t) if t != inv.task => {
            Err(CliError::Validation(format!("config names task `{t}` but `{}` was requested", inv.task)))
        }
        _ => tasks::dispatch(inv.task, &cfg, base.as_deref(), &mut dir),
    });

    let (status, checks, diagnostics) = match result {
        Ok(out) => {
            for line in out.console.iter().chain(&out.checks) {
                println!("{line}");
            }
            let status = if out.passed { RunStatus::Pass } else { RunStatus::Fail };
            (status, out.checks, Vec::new())
        }
        Err(e) => {
            log::error!("{e}");
            let status = if e.exit_code() == 3 { RunStatus::NumericalError } else { RunStatus::ValidationError };
            let mut diagnostics = vec![e.to_string()];
            diagnostics.extend(e.diagnostics());
            (status, Vec::new(), diagnostics)
        }
    };
    dir.record(vec![MANIFEST.to_string()]);
    let manifest = RunManifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        task: inv.task.name().to_string(),
        config_sha256,
        seed,
        started,
        finished: timestamp(),
        status,
        files: dir.files(),
        checks,
        diagnostics,
    };
    dir.write_json(MANIFEST, &manifest)?;
    Ok(manifest)
}
