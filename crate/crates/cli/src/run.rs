//! Config resolution and the per-run manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use beyondct::config::RunConfig;
use beyondct::model::ModelConfig;
use beyondct::{Error, Result};

use crate::Cli;

/// Applies, in order: the config file, `--tiny`, `--set` overrides, then the
/// dedicated flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.tiny {
        let tiny = ModelConfig::tiny();
        cfg.model = ModelConfig {
            kind: cfg.model.kind,
            use_demographics: cfg.model.use_demographics,
            target: cfg.model.target,
            input_scale: cfg.model.input_scale,
            ..tiny
        };
    }
    let mut bad = Vec::new();
    for o in &cli.overrides {
        match o.split_once('=') {
            Some((k, v)) => {
                if let Err(Error::Config(v)) = cfg.set(k.trim(), v.trim()) {
                    bad.extend(v);
                }
            }
            None => bad.push(format!("--set {o}: expected KEY=VALUE")),
        }
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(e) = cli.epochs {
        cfg.train.epochs = e;
    }
    if let Some(t) = &cli.target {
        match t.parse() {
            Ok(t) => cfg.model.target = t,
            Err(Error::Config(v)) => bad.extend(v),
            Err(e) => return Err(e),
        }
    }
    if cli.use_demographics {
        cfg.model.use_demographics = true;
    }
    if cli.deterministic {
        cfg.train.deterministic = true;
    }
    if let Some(o) = &cli.out {
        cfg.paths.output_dir = o.clone();
    }
    cfg.sync_seed();
    if !bad.is_empty() {
        return Err(Error::Config(bad));
    }
    Ok(cfg)
}

pub fn config_hash(cfg: &RunConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_json().as_bytes()))
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub args: Vec<String>,
    pub version: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub outputs: Vec<PathBuf>,
    pub config: &'a RunConfig,
}

pub fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig, outputs: Vec<PathBuf>) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let m = RunManifest {
        command,
        args: std::env::args().skip(1).collect(),
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: config_hash(cfg),
        seed: cfg.seed,
        threads: cfg.train.thread_count(),
        outputs,
        config: cfg,
    };
    let path = dir.join("run-manifest.json");
    let text = serde_json::to_string_pretty(&m).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
