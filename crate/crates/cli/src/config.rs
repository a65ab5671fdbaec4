use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use inl_core::data::SyntheticSpec;
use inl_core::protocol::{SystemSpec, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Inl,
    Fl,
    Sl,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Inl => "inl",
            Scheme::Fl => "fl",
            Scheme::Sl => "sl",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inl" => Ok(Scheme::Inl),
            "fl" => Ok(Scheme::Fl),
            "sl" => Ok(Scheme::Sl),
            other => bail!("unknown scheme {other:?}; expected inl, fl or sl"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlOptions {
    pub clients: usize,
    pub local_epochs: usize,
    /// Train and evaluate a single-view replica on the mean of all views
    /// instead of a full multi-view replica.
    pub averaged_view: bool,
}

impl Default for FlOptions {
    fn default() -> Self {
        Self { clients: 5, local_epochs: 1, averaged_view: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlOptions {
    pub clients: usize,
}

impl Default for SlOptions {
    fn default() -> Self {
        Self { clients: 5 }
    }
}

/// Everything one `train` invocation needs. Paths are resolved relative to
/// the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scheme: Scheme,
    /// Generated on the fly when `data_file` is absent.
    pub data: SyntheticSpec,
    /// A dataset written by `gen-data`.
    pub data_file: Option<PathBuf>,
    /// Graph JSON; defaults to a star over the views.
    pub graph_file: Option<PathBuf>,
    /// Capacity of every star edge when no graph file is given.
    pub capacity: f64,
    /// Architecture JSON; defaults to the standard architecture.
    pub architecture_file: Option<PathBuf>,
    pub train: TrainConfig,
    pub fl: FlOptions,
    pub sl: SlOptions,
    /// Accuracy whose first crossing is reported in the summary.
    pub target_accuracy: f64,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Inl,
            data: SyntheticSpec::default(),
            data_file: None,
            graph_file: None,
            capacity: 128.0,
            architecture_file: None,
            train: TrainConfig::default(),
            fl: FlOptions::default(),
            sl: SlOptions::default(),
            target_accuracy: 0.85,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data_file, &mut cfg.graph_file, &mut cfg.architecture_file, &mut cfg.out_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        for p in [&self.data_file, &self.graph_file, &self.architecture_file].into_iter().flatten() {
            if !p.is_file() {
                bail!("{} does not exist", p.display());
            }
        }
        if !(self.capacity > 0.0) {
            bail!("capacity must be positive, got {}", self.capacity);
        }
        if !(0.0..=1.0).contains(&self.target_accuracy) {
            bail!("target accuracy {} outside [0, 1]", self.target_accuracy);
        }
        if self.fl.clients == 0 || self.fl.local_epochs == 0 || self.sl.clients == 0 {
            bail!("client and local epoch counts must be positive");
        }
        Ok(())
    }

    pub fn architecture(&self) -> Result<Option<SystemSpec>> {
        let Some(p) = &self.architecture_file else { return Ok(None) };
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"scheme":"fl","train":{"s":0.1,"eta":0.01,"batch_size":8,"epochs":2,"seed":3}}"#)
                .unwrap();
        assert_eq!(cfg.scheme, Scheme::Fl);
        assert_eq!(cfg.train.bits_per_value, 32);
        assert_eq!(cfg.fl.clients, 5);
        assert_eq!(cfg.data, SyntheticSpec::default());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"shceme":"fl"}"#).is_err());
    }

    #[test]
    fn default_roundtrips() {
        let cfg = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        cfg.validate().unwrap();
    }
}
