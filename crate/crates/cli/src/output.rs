use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub const OUT_DIR_ENV: &str = "INL_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "out";

/// Output directory, created on first write.
#[derive(Debug, Clone)]
pub struct OutDir(PathBuf);

impl OutDir {
    /// `INL_OUT_DIR` wins over the configured directory, which wins over
    /// `./out`.
    pub fn resolve(configured: Option<&Path>) -> Self {
        match std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            Some(env) => Self(PathBuf::from(env)),
            None => Self(configured.map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), Path::to_path_buf)),
        }
    }

    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self(path.into())
    }

    pub fn path(&self) -> &Path {
        &self.0
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.0).with_context(|| format!("creating {}", self.0.display()))?;
        let path = self.file(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }
}
