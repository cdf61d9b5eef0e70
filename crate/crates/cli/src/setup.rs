//! Configuration assembly, output directory bookkeeping and error mapping.

use std::fs;
use std::path::{Path, PathBuf};

use maooam_core::io::{parse_config, unix_now, RunConfig, RunManifest, DEFAULT_PARAMS};
use maooam_core::{Exec, Resolution};
use serde::Serialize;
use thiserror::Error;

use crate::Global;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] maooam_core::Error),
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Encode(#[from] serde_json::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) if e.is_config() => "config",
            CliError::Core(e) if e.is_numerical() => "numerical",
            CliError::Validation(_) => "validation",
            _ => "io",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind() {
            "config" => 2,
            "numerical" => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn config_err(path: &str, message: impl Into<String>) -> CliError {
    maooam_core::Error::Config { path: path.into(), message: message.into() }.into()
}

/// Seconds from `900`, `12h`, `30d` or `10y` (365 days).
pub fn parse_duration(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let (num, unit) = match s.char_indices().last() {
        Some((i, c)) if c.is_ascii_alphabetic() => (&s[..i], c),
        _ => (s, 's'),
    };
    let scale = match unit {
        's' => 1.0,
        'h' => 3600.0,
        'd' => 86400.0,
        'y' => 365.0 * 86400.0,
        other => return Err(format!("unknown unit `{other}` (use s, h, d or y)")),
    };
    let v: f64 = num.trim().parse().map_err(|_| format!("not a duration: `{s}`"))?;
    if !(v.is_finite() && v >= 0.0) {
        return Err(format!("duration must be finite and non-negative: `{s}`"));
    }
    Ok(v * scale)
}

/// Applies `section.key=value` to a parsed TOML table. Values are read as
/// TOML literals, falling back to bare strings.
fn apply_set(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| config_err(spec, "expected SECTION.KEY=VALUE"))?;
    let path = path.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields at least one item");
    let mut cur = table;
    for k in parents {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        cur = entry.as_table_mut().ok_or_else(|| config_err(path, format!("`{k}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Builds the run configuration from the parameter file, `--set` overrides
/// and the global flags, in that order.
pub fn load(g: &Global) -> Result<RunConfig> {
    let text = match &g.params {
        Some(p) => fs::read_to_string(p).map_err(|e| config_err("params", format!("{}: {e}", p.display())))?,
        None => DEFAULT_PARAMS.to_string(),
    };
    let text = if g.sets.is_empty() {
        text
    } else {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| config_err("", e.message()))?;
        for s in &g.sets {
            apply_set(&mut table, s)?;
        }
        toml::to_string(&table).map_err(|e| config_err("", e.to_string()))?
    };
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = g.seed {
        cfg.numerics.seed = seed;
    }
    if let Some(r) = &g.resolution {
        cfg.numerics.resolution = r.parse::<Resolution>()?;
    }
    if let Some(t) = g.t_end {
        cfg.numerics.t_end = t;
    }
    if g.sequential {
        cfg.numerics.exec = Exec::Sequential;
    }
    Ok(cfg)
}

/// Output directory with its manifest.
pub struct Outputs {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Outputs {
    /// Creates the directory and writes the canonical configuration.
    pub fn create(dir: &Path, command: &str, cfg: &RunConfig) -> Result<Self> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let text = cfg.to_toml()?;
        let config_path = dir.join("config.toml");
        fs::write(&config_path, &text).map_err(io_err(&config_path))?;
        let mut manifest = RunManifest::new(command, &text, config_path, cfg.numerics.seed);
        manifest.artifacts.push("config.toml".into());
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    /// Registers an artifact and returns its full path.
    pub fn artifact(&mut self, name: &str) -> PathBuf {
        let rel = PathBuf::from(name);
        if !self.manifest.artifacts.contains(&rel) {
            self.manifest.artifacts.push(rel);
        }
        self.dir.join(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.artifact(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let text = serde_json::to_string_pretty(value)? + "\n";
        fs::write(&path, text).map_err(io_err(&path))
    }

    pub fn write_ndjson<T: Serialize>(&mut self, name: &str, records: &[T]) -> Result<()> {
        let path = self.artifact(name);
        let mut out = Vec::new();
        maooam_core::io::write_ndjson(&mut out, records)?;
        fs::write(&path, out).map_err(io_err(&path))
    }

    /// Writes `manifest.json` with the outcome of `result`.
    pub fn finish<T>(mut self, result: Result<T>) -> Result<T> {
        self.manifest.end_wall = unix_now();
        self.manifest.exit_status = match &result {
            Ok(_) => 0,
            Err(e) => e.exit_code().into(),
        };
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
        fs::write(&path, text).map_err(io_err(&path))?;
        result
    }
}

pub fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io { path: path.to_path_buf(), source }
}
