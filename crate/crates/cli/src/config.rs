//! Flat `key = value` config files and flag/file/default resolution.
//!
//! Flags override file values; file values override built-in defaults. Every
//! run records its fully resolved configuration in a JSON manifest next to
//! the output file, together with the seeds and a machine fingerprint, which
//! is enough to regenerate the output byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Parsed config file: lines of `key = value`, `#` comments, blank lines.
#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!(
                    "{}:{}: expected 'key = value', got '{raw}'",
                    path.display(),
                    lineno + 1
                ));
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    /// Typed lookup with parse error reporting.
    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| format!("config key '{key}': cannot parse '{raw}'")),
        }
    }
}

/// Flag value if given, else file value, else default.
pub fn resolve<T: std::str::FromStr + Clone>(
    flag: &Option<T>,
    file: &FileConfig,
    key: &str,
    default: T,
) -> Result<T, String> {
    if let Some(v) = flag {
        return Ok(v.clone());
    }
    Ok(file.get_parsed::<T>(key)?.unwrap_or(default))
}

/// Same, but with no default: optional everywhere.
pub fn resolve_opt<T: std::str::FromStr + Clone>(
    flag: &Option<T>,
    file: &FileConfig,
    key: &str,
) -> Result<Option<T>, String> {
    if let Some(v) = flag {
        return Ok(Some(v.clone()));
    }
    file.get_parsed::<T>(key)
}

/// Default output directory: `RPNN_OUT_DIR` or the working directory.
pub fn output_dir() -> PathBuf {
    std::env::var_os("RPNN_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Fully resolved run description, serialized as the manifest.
#[derive(Debug, serde::Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config: BTreeMap<String, String>,
    pub machine: Machine,
}

#[derive(Debug, serde::Serialize)]
pub struct Machine {
    pub os: String,
    pub arch: String,
    pub cpus: usize,
}

impl Manifest {
    pub fn new(subcommand: &str, config: BTreeMap<String, String>) -> Manifest {
        Manifest {
            tool: "rpnn".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            config,
            machine: Machine {
                os: std::env::consts::OS.into(),
                arch: std::env::consts::ARCH.into(),
                cpus: std::thread::available_parallelism()
                    .map(|n| n.get())
                    .unwrap_or(1),
            },
        }
    }

    /// Write `<out>.manifest.json` and echo the resolved config to stderr.
    pub fn emit(&self, out_path: &Path) -> Result<(), String> {
        let manifest_path = manifest_path_for(out_path);
        let body = serde_json::to_string_pretty(self).map_err(|e| e.to_string())?;
        std::fs::write(&manifest_path, body)
            .map_err(|e| format!("cannot write manifest {}: {e}", manifest_path.display()))?;
        eprintln!("resolved config ({}):", self.subcommand);
        for (k, v) in &self.config {
            eprintln!("  {k} = {v}");
        }
        Ok(())
    }
}

pub fn manifest_path_for(out_path: &Path) -> PathBuf {
    let mut os = out_path.as_os_str().to_owned();
    os.push(".manifest.json");
    PathBuf::from(os)
}
