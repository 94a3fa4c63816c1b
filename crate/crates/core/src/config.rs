//! Search configuration files, dotted-key overrides and run manifests.
//!
//! A configuration is a TOML document whose keys mirror [`SearchConfig`]:
//!
//! ```toml
//! seed = 7
//! space = "compact"
//! generations = 20
//! train.epochs = 500
//! moea.population = 100
//! evaluator.kind = "synthetic"
//! evaluator.noise = 0.0
//! ```
//!
//! Overrides use the same dotted keys (`train.epochs=50`) and win over the
//! file. Values are parsed as TOML, falling back to a bare string.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::encoding::SearchSpace;
use crate::evaluator::EvaluatorKind;
use crate::latency::LatencyTable;
use crate::search::SearchConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Names accepted in place of a configuration file.
pub const PRESETS: [&str; 2] = ["default", "compact"];

/// Loads a preset name, a TOML file, or the `config` object of a JSON run
/// manifest, then applies `overrides` in order.
pub fn load(source: &str, overrides: &[String]) -> Result<SearchConfig, ConfigError> {
    let mut table = base_table(source)?;
    for o in overrides {
        let (key, value) = o.split_once('=').ok_or_else(|| ConfigError::Override(o.clone()))?;
        set_dotted(&mut table, key.trim(), parse_value(value.trim())).map_err(|_| ConfigError::Override(o.clone()))?;
    }
    let cfg: SearchConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse { path: source.to_string(), msg: e.message().to_string() })?;
    validate(&cfg)?;
    Ok(cfg)
}

fn base_table(source: &str) -> Result<toml::Table, ConfigError> {
    let parse_err = |msg: String| ConfigError::Parse { path: source.to_string(), msg };
    match source {
        "default" => return Ok(toml::Table::new()),
        "compact" => {
            let mut t = toml::Table::new();
            t.insert("space".into(), "compact".into());
            return Ok(t);
        }
        _ => {}
    }
    let text =
        std::fs::read_to_string(source).map_err(|e| ConfigError::Io { path: source.to_string(), source: e })?;
    if source.ends_with(".json") {
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
        let cfg = v.get("config").cloned().unwrap_or(v);
        let cfg: SearchConfig = serde_json::from_value(cfg).map_err(|e| parse_err(e.to_string()))?;
        toml::Value::try_from(cfg)
            .map_err(|e| parse_err(e.to_string()))?
            .as_table()
            .cloned()
            .ok_or_else(|| parse_err("not a table".into()))
    } else {
        text.parse::<toml::Table>().map_err(|e| parse_err(e.message().to_string()))
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or(())?;
    let mut cur = table;
    for p in parts {
        if p.is_empty() {
            return Err(());
        }
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or(())?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Resolves a space preset name or a TOML/JSON space file.
pub fn resolve_space(spec: &str) -> Result<SearchSpace, ConfigError> {
    if let Some(s) = SearchSpace::preset(spec) {
        return Ok(s);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(ConfigError::Invalid(format!(
            "space `{spec}` is neither a preset ({}) nor an existing file",
            PRESETS.join(", ")
        )));
    }
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: spec.to_string(), source: e })?;
    let parse_err = |msg: String| ConfigError::Parse { path: spec.to_string(), msg };
    let space: SearchSpace = if spec.ends_with(".json") {
        serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?
    } else {
        toml::from_str(&text).map_err(|e| parse_err(e.message().to_string()))?
    };
    space.check().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(space)
}

/// The configured table, or the synthetic one when no file is set. Unknown
/// keys in the file are tolerated; missing ones are an error.
pub fn resolve_table(cfg: &SearchConfig, space: &SearchSpace) -> Result<LatencyTable, ConfigError> {
    match &cfg.lut {
        None => Ok(LatencyTable::synthetic(space)),
        Some(p) => {
            let loaded = LatencyTable::load(p, space).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            loaded.table.check_complete(space).map_err(|e| ConfigError::Invalid(format!("{}: {e}", p.display())))?;
            Ok(loaded.table)
        }
    }
}

pub fn validate(cfg: &SearchConfig) -> Result<(), ConfigError> {
    let bad = |m: String| Err(ConfigError::Invalid(m));
    if cfg.initial_population == 0 {
        return bad("initial_population must be positive".into());
    }
    if cfg.per_generation == 0 && cfg.generations > 0 {
        return bad("per_generation must be positive".into());
    }
    if !(cfg.train.margin > 0.0) || !(cfg.train.learning_rate > 0.0) || !(cfg.train.weight_decay >= 0.0) {
        return bad("train.margin and train.learning_rate must be positive, train.weight_decay non-negative".into());
    }
    if cfg.train.batch_size < 2 {
        return bad("train.batch_size must be at least 2".into());
    }
    if cfg.moea.population < 2 || cfg.moea.tournament == 0 {
        return bad("moea.population must be at least 2 and moea.tournament positive".into());
    }
    for (name, p) in [("moea.crossover", cfg.moea.crossover), ("moea.mutation", cfg.moea.mutation), ("ks.crossover", cfg.ks.crossover)] {
        if !(0.0..=1.0).contains(&p) {
            return bad(format!("{name} must lie in [0, 1]"));
        }
    }
    if let Some(f) = cfg.accuracy_floor {
        if !(0.0..=1.0).contains(&f) {
            return bad("accuracy_floor must lie in [0, 1]".into());
        }
    }
    match &cfg.evaluator {
        EvaluatorKind::Synthetic { noise, .. } if !(*noise >= 0.0) => return bad("evaluator.noise must be non-negative".into()),
        EvaluatorKind::Tabular { path } if !path.exists() => {
            return bad(format!("tabular records file {} does not exist", path.display()))
        }
        EvaluatorKind::External { command, timeout_secs } => {
            if command.is_empty() {
                return bad("evaluator.command must name a program".into());
            }
            if !(*timeout_secs > 0.0) {
                return bad("evaluator.timeout_secs must be positive".into());
            }
            if cfg.lut.is_none() {
                return bad("the external evaluator needs a measured latency table: set `lut`".into());
            }
        }
        _ => {}
    }
    if let Some(p) = &cfg.lut {
        if !p.exists() {
            return bad(format!("latency table {} does not exist", p.display()));
        }
    }
    Ok(())
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub seed: u64,
    pub evaluator: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<PathBuf>,
    pub config: SearchConfig,
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}
