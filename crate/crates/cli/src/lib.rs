//! Config-driven scenario runner: parses a TOML run description, executes
//! the scenario and writes CSV files plus a `manifest.sha256` into one
//! output directory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod scenarios;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub use config::{parse_config, ConfigErrors, RunConfig, Scenario};
pub use scenarios::Output;

pub const MANIFEST: &str = "manifest.sha256";
pub const ERROR_RECORD: &str = "error.json";

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error:\n{0}")]
    Config(ConfigErrors),
    #[error("numerical failure: {0}")]
    Numerical(#[from] critsense::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Numerical(_) => EXIT_NUMERICAL,
            RunError::Io(_) => EXIT_IO,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Numerical(_) => "numerical",
            RunError::Io(_) => "io",
        }
    }

    /// Machine-readable record written as `error.json`.
    pub fn record(&self, scenario: Option<Scenario>) -> serde_json::Value {
        let messages: Vec<String> = match self {
            RunError::Config(e) => e.0.clone(),
            other => vec![other.to_string()],
        };
        serde_json::json!({
            "status": "error",
            "kind": self.kind(),
            "exit_code": self.exit_code(),
            "scenario": scenario.map(|s| s.name()),
            "messages": messages,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

/// `sha256sum`-compatible manifest text.
pub fn manifest_text(entries: &[ManifestEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        let _ = writeln!(s, "{}  {}", e.sha256, e.file);
    }
    s
}

fn check_name(name: &str) -> std::io::Result<()> {
    let p = Path::new(name);
    let plain = p.components().count() == 1
        && matches!(p.components().next(), Some(std::path::Component::Normal(_)))
        && name != MANIFEST
        && name != ERROR_RECORD;
    if plain {
        Ok(())
    } else {
        Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            format!("refusing to write {name:?}: outputs must be plain file names"),
        ))
    }
}

/// Writes `outputs` and the manifest into `dir`; returns the manifest entries.
pub fn write_outputs(dir: &Path, outputs: &[Output]) -> std::io::Result<Vec<ManifestEntry>> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(outputs.len());
    for o in outputs {
        check_name(&o.name)?;
        fs::write(dir.join(&o.name), &o.bytes)?;
        entries.push(ManifestEntry {
            file: o.name.clone(),
            sha256: hex::encode(Sha256::digest(&o.bytes)),
            bytes: o.bytes.len(),
        });
    }
    fs::write(dir.join(MANIFEST), manifest_text(&entries))?;
    Ok(entries)
}

/// Executes the scenario on a pool of `jobs` threads (0 = rayon default) and writes its files.
pub fn run(config: &RunConfig, out_dir: &Path, jobs: usize) -> Result<Vec<ManifestEntry>, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let outputs = pool.install(|| scenarios::execute(config))?;
    let stale = out_dir.join(ERROR_RECORD);
    if stale.exists() {
        fs::remove_file(stale)?;
    }
    Ok(write_outputs(out_dir, &outputs)?)
}

/// Best-effort `error.json` in `dir`.
pub fn write_error_record(dir: &Path, err: &RunError, scenario: Option<Scenario>) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(ERROR_RECORD);
    let mut text = serde_json::to_string_pretty(&err.record(scenario)).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

/// Scenario names, descriptions and settings with defaults.
pub fn list_scenarios() -> String {
    let mut s = String::new();
    for sc in Scenario::ALL {
        let _ = writeln!(s, "{:<18} {}", sc.name(), sc.description());
        for item in config::schema(sc) {
            let default = match &item.default {
                config::Setting::Number(x) => format!("{x}"),
                config::Setting::Count(n) => format!("{n}"),
                config::Setting::Counts(n) => format!("{n:?}"),
                config::Setting::Grid(g) if g.len() > 4 => {
                    format!("{} points, {} .. {}", g.len(), g[0], g[g.len() - 1])
                }
                config::Setting::Grid(g) => format!("{g:?}"),
                config::Setting::Text(t) => format!("{t:?}"),
            };
            let unit = match item.kind {
                config::Kind::Frequency | config::Kind::FrequencyGrid => " [unit flags required]",
                _ => "",
            };
            let _ = writeln!(s, "    {:<16} {}{} (default {})", item.key, item.help, unit, default);
        }
    }
    s
}
