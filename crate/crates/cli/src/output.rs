//! Config resolution and artifact paths shared by the subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cluegraph::io::write_atomic;
use cluegraph::kg::load_dir;
use cluegraph::train::TrainConfig;
use cluegraph::DatasetBundle;
use serde::Serialize;

use crate::args::Global;
use crate::UsageError;

/// Applies `--config`, `--set`, `--seed`, `--precision` and `--workers`, in
/// that order, on top of `base`.
pub fn resolve_config(g: &Global, mut cfg: TrainConfig) -> Result<TrainConfig> {
    if let Some(path) = &g.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        cfg.apply_text(&text)
            .with_context(|| format!("config {}", path.display()))?;
    }
    for kv in &g.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| UsageError(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())
            .map_err(|e| UsageError(format!("--set {kv}: {e}")))?;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(p) = g.precision {
        cfg.precision = p;
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(cfg)
}

pub fn data_dir(g: &Global) -> Result<&Path> {
    match &g.data_dir {
        Some(d) => Ok(d),
        None => bail!("this command needs --data-dir"),
    }
}

pub fn load_bundle(g: &Global) -> Result<DatasetBundle> {
    let dir = data_dir(g)?;
    if !dir.is_dir() {
        bail!("data directory {} does not exist", dir.display());
    }
    load_dir(dir, g.time_gap).with_context(|| format!("loading dataset from {}", dir.display()))
}

pub fn out_path(g: &Global, name: &str) -> PathBuf {
    g.out_dir.join(name)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

pub fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    cluegraph::io::write_jsonl(path, records).with_context(|| format!("writing {}", path.display()))
}

/// Flat `key = value` report of a JSON object's scalar fields.
pub fn key_values(v: &serde_json::Value) -> String {
    let mut out = String::new();
    if let Some(map) = v.as_object() {
        for (k, x) in map {
            let shown = match x {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Null => "none".into(),
                other => other.to_string(),
            };
            out.push_str(&format!("{k} = {shown}\n"));
        }
    }
    out
}
