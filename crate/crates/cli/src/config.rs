use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pairgan::losses::TaskMode;
use pairgan::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

/// Contents of a `train` configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Decides which of `cls` / `dom` is switched off.
    #[serde(default)]
    pub mode: TaskMode,
    /// Split directory of domain A (`images/` and `labels/`).
    pub source: PathBuf,
    /// Split directory of domain B.
    pub target: PathBuf,
    pub output: PathBuf,
    /// Metrics computed by `eval` runs that reuse this file.
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
    /// Optional feature-network asset for Fréchet distances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedder: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainConfig,
}

pub fn default_metrics() -> Vec<String> {
    ["l1", "ssim", "fid"].map(String::from).to_vec()
}

impl RunConfig {
    /// Parses a TOML file; relative paths are taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.source, &mut cfg.target, &mut cfg.output] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(e) = cfg.embedder.as_mut().filter(|e| e.is_relative()) {
            *e = base.join(&*e);
        }
        Ok(cfg)
    }

    /// Applies the task mode to the loss weights, resolves defaults and validates. Returns
    /// the notes about values that were changed.
    pub fn resolve(&mut self) -> Result<Vec<String>> {
        let mut notes = vec![];
        let w = &mut self.train.weights;
        let (name, before) = match self.mode {
            TaskMode::Transfiguration => ("dom", w.dom),
            TaskMode::DomainTransfer => ("cls", w.cls),
        };
        w.mode = self.mode;
        *w = w.with_mode_applied();
        if before != 0.0 {
            notes.push(format!("train.weights.{name} set to 0 for mode {:?}", self.mode));
        }
        self.train = self.train.resolved().context("train")?;
        for m in &self.metrics {
            crate::eval::Metric::parse(m).context("metrics")?;
        }
        Ok(notes)
    }

    /// Fails on the first referenced path that does not exist.
    pub fn check_paths(&self) -> Result<()> {
        for (field, dir) in [("source", &self.source), ("target", &self.target)] {
            for sub in ["images", "labels"] {
                let p = dir.join(sub);
                if !p.is_dir() {
                    bail!("{field}: directory {} does not exist", p.display());
                }
            }
        }
        if let Some(e) = &self.embedder {
            if !e.is_file() {
                bail!("embedder: file {} does not exist", e.display());
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
