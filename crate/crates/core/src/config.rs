//! Run configuration: one JSON document per run, with dotted-path overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::model::ModelConfig;
use crate::phantom::PhantomSpec;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub manifest: Option<PathBuf>,
    /// Base for relative volume paths; defaults to the manifest's directory.
    pub volume_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            volume_dir: None,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Drives the split, initialization, shuffling and augmentation.
    pub seed: u64,
    pub paths: PathsConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub phantom: PhantomSpec,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("config: {e}")]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(v) => Error::Config(v.into_iter().map(|m| format!("{}: {m}", path.display())).collect()),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Replaces the value at a dotted path such as `train.lr`. The value is
    /// parsed as JSON when possible and taken as a string otherwise.
    pub fn set(&mut self, dotted: &str, raw: &str) -> Result<()> {
        let mut doc = serde_json::to_value(&*self).expect("config serializes");
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut node = &mut doc;
        let keys: Vec<&str> = dotted.split('.').collect();
        for (i, key) in keys.iter().enumerate() {
            let obj = node.as_object_mut().ok_or_else(|| {
                Error::Config(vec![format!("{}: not an object", keys[..i].join("."))])
            })?;
            if !obj.contains_key(*key) {
                return Err(Error::Config(vec![format!("unknown config key {dotted}")]));
            }
            node = obj.get_mut(*key).expect("checked");
        }
        *node = value;
        *self = serde_json::from_value(doc)
            .map_err(|e| Error::Config(vec![format!("--set {dotted}={raw}: {e}")]))?;
        Ok(())
    }

    /// Copies the global seed into the places that consume it.
    pub fn sync_seed(&mut self) {
        self.train.seed = self.seed;
    }

    /// Every semantic violation across all sections.
    pub fn violations(&self) -> Vec<String> {
        let mut bad = self.model.violations();
        bad.extend(self.train.violations());
        bad.extend(self.augment.violations());
        bad.extend(self.phantom.violations());
        if self.eval.cdf_bins == 0 {
            bad.push("eval.cdf_bins must be at least 1".into());
        }
        bad
    }

    /// Semantic violations plus unresolvable input paths.
    pub fn validate(&self, need_manifest: bool) -> Result<()> {
        let mut bad = self.violations();
        match &self.paths.manifest {
            Some(m) if !m.is_file() => bad.push(format!("paths.manifest {} does not exist", m.display())),
            None if need_manifest => bad.push("paths.manifest is required".into()),
            _ => {}
        }
        if let Some(d) = &self.paths.volume_dir {
            if !d.is_dir() {
                bad.push(format!("paths.volume_dir {} is not a directory", d.display()));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }
}
