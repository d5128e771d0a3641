//! JSON experiment configuration with dotted-path overrides.

use std::fs;
use std::path::{Path, PathBuf};

use dsgd_core::bounds::{BoundParams, ConvexDecreasingForm};
use dsgd_core::engine::StepCap;
use dsgd_core::losses::LossFamily;
use dsgd_core::topology::TopologyKind;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scenario::Scenario;

/// Rejected configuration; maps to exit code 1.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct ValidationError(pub String);

fn invalid(msg: impl Into<String>) -> ValidationError {
    ValidationError(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SingleRun,
    Twin,
    BoundEval,
    Sweep,
    VerifySuite,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::SingleRun => "single-run",
            ExperimentKind::Twin => "twin",
            ExperimentKind::BoundEval => "bound-eval",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::VerifySuite => "verify-suite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum TwinTarget {
    Position { r: usize, k: usize },
    FullSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem {
    Convex,
    AverageWeight,
    StronglyConvex,
    Nonconvex,
    Optimization,
    Generalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsRequest {
    pub theorems: Vec<Theorem>,
    /// Explicit parameters; derived from `run` when absent.
    #[serde(default)]
    pub params: Option<BoundParams>,
    #[serde(default)]
    pub convex_form: ConvexDecreasingForm,
    /// `[Delta^2]^{1/2}` fed to the generalization shape.
    #[serde(default)]
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default)]
    pub m: Vec<usize>,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub iterations: Vec<usize>,
    #[serde(default)]
    pub eta: Vec<f64>,
    #[serde(default)]
    pub topology: Vec<TopologyKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::Count(1)
    }
}

impl Seeds {
    pub fn resolve(&self, base: u64) -> Vec<u64> {
        match self {
            Seeds::Count(c) => (0..*c).map(|i| base + i).collect(),
            Seeds::List(l) => l.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("reports")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: default_dir(), formats: default_formats() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Theorem preconditions are enforced; mismatches are errors.
    Acceptance,
    /// Preconditions are only recorded.
    #[default]
    Exploratory,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    #[default]
    Synthetic,
    Libsvm { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    #[serde(default)]
    pub run: Option<Scenario>,
    #[serde(default)]
    pub data: DataSource,
    #[serde(default)]
    pub twin: Option<TwinTarget>,
    #[serde(default)]
    pub bounds: Option<BoundsRequest>,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub profile: Profile,
    /// Criteria to run for `verify-suite`; all when empty.
    #[serde(default)]
    pub criteria: Vec<u32>,
}

/// A parsed configuration together with the JSON it was parsed from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub raw: Value,
}

impl LoadedConfig {
    pub fn kind(&self) -> ExperimentKind {
        self.config.kind.unwrap_or(ExperimentKind::SingleRun)
    }

    /// Hex SHA-256 of the canonical (key-sorted, compact) configuration JSON,
    /// ignoring the `output` section.
    pub fn hash(&self) -> String {
        let mut v = self.raw.clone();
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output");
        }
        content_hash(&v)
    }
}

pub fn content_hash(v: &Value) -> String {
    let canonical = serde_json::to_string(v).expect("JSON values serialize");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Sets `path` (dot-separated) in `root` to `value`, parsed as JSON when possible and as a string otherwise.
pub fn apply_override(root: &mut Value, path: &str, value: &str) -> Result<(), ValidationError> {
    let parsed: Value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(invalid(format!("bad override path {path:?}")));
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        if !node.is_object() {
            return Err(invalid(format!("override {path:?}: {key:?} is not inside an object")));
        }
        node = node
            .as_object_mut()
            .expect("checked above")
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    match node.as_object_mut() {
        Some(obj) => {
            obj.insert(keys[keys.len() - 1].to_string(), parsed);
            Ok(())
        }
        None => Err(invalid(format!("override {path:?}: parent is not an object"))),
    }
}

/// Parses `key=value` override strings.
pub fn parse_set(s: &str) -> Result<(String, String), ValidationError> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.to_string()))
        .ok_or_else(|| invalid(format!("--set expects key=value, got {s:?}")))
}

/// Reads a configuration file as unvalidated JSON; an empty object when `path` is `None`.
pub fn read_raw(path: Option<&Path>) -> Result<Value, ValidationError> {
    let raw: Value = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| invalid(format!("reading {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Default::default()),
    };
    if !raw.is_object() {
        return Err(invalid("configuration must be a JSON object"));
    }
    Ok(raw)
}

pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<LoadedConfig, ValidationError> {
    let mut raw = read_raw(path)?;
    for (k, v) in overrides {
        apply_override(&mut raw, k, v)?;
    }
    from_value(raw)
}

pub fn from_value(raw: Value) -> Result<LoadedConfig, ValidationError> {
    let config: ExperimentConfig = serde_json::from_value(raw.clone()).map_err(|e| invalid(format!("config: {e}")))?;
    let loaded = LoadedConfig { config, raw };
    validate(&loaded.config)?;
    Ok(loaded)
}

fn needs_run(kind: ExperimentKind) -> bool {
    matches!(kind, ExperimentKind::SingleRun | ExperimentKind::Twin | ExperimentKind::Sweep)
}

/// Semantic checks beyond the schema.
pub fn validate(cfg: &ExperimentConfig) -> Result<(), ValidationError> {
    let kind = cfg.kind.unwrap_or(ExperimentKind::SingleRun);
    if needs_run(kind) && cfg.run.is_none() {
        return Err(invalid(format!("experiment kind {} needs a \"run\" section", kind.as_str())));
    }
    if kind == ExperimentKind::Twin && cfg.twin.is_none() {
        return Err(invalid("twin experiments need \"twin\": {\"position\": {...}} or \"full-sweep\""));
    }
    if kind == ExperimentKind::BoundEval {
        let Some(b) = &cfg.bounds else {
            return Err(invalid("bound-eval needs a \"bounds\" section"));
        };
        if b.params.is_none() && cfg.run.is_none() {
            return Err(invalid("bound-eval needs bounds.params or a run section to derive them from"));
        }
        if b.theorems.is_empty() {
            return Err(invalid("bounds.theorems is empty"));
        }
    }
    if kind == ExperimentKind::Sweep && cfg.sweep.is_none() {
        return Err(invalid("sweep experiments need a \"sweep\" grid"));
    }
    if let Some(bad) = cfg.criteria.iter().find(|c| !(1..=15).contains(*c)) {
        return Err(invalid(format!("criterion {bad} does not exist")));
    }
    if let Seeds::Count(0) = cfg.seeds {
        return Err(invalid("seeds count must be positive"));
    }
    if let Some(run) = &cfg.run {
        validate_run(run, cfg.profile)?;
        if let (Some(TwinTarget::Position { r, k }), true) = (cfg.twin, kind == ExperimentKind::Twin) {
            if r >= run.m || k >= run.n {
                return Err(invalid(format!("twin position ({r}, {k}) outside {}x{}", run.m, run.n)));
            }
        }
    }
    Ok(())
}

fn validate_run(run: &Scenario, profile: Profile) -> Result<(), ValidationError> {
    if run.m == 0 || run.n == 0 || run.dim == 0 {
        return Err(invalid("run.m, run.n and run.dim must be positive"));
    }
    if run.stride == 0 {
        return Err(invalid("run.stride must be positive"));
    }
    if !(run.feature_bound > 0.0 && run.domain_radius > 0.0) {
        return Err(invalid("run.feature_bound and run.domain_radius must be positive"));
    }
    run.schedule.validate().map_err(|e| invalid(e.to_string()))?;
    if profile == Profile::Acceptance {
        let strongly = matches!(run.loss, LossFamily::RidgeLogistic { .. } | LossFamily::Quadratic { .. });
        if strongly && run.cap == Some(StepCap::StronglyConvex) && !run.projected {
            return Err(invalid("acceptance profile: strongly convex regime requires run.projected = true"));
        }
        if !run.loss.is_convex() && matches!(run.cap, Some(StepCap::Convex | StepCap::StronglyConvex)) {
            return Err(invalid(format!("acceptance profile: {} is not convex", run.loss.name())));
        }
        if run.cap == Some(StepCap::StronglyConvex) && !strongly {
            return Err(invalid(format!("acceptance profile: {} is not strongly convex", run.loss.name())));
        }
        let (cfg, _) = run.build().map_err(|e| invalid(format!("{e:#}")))?;
        if cfg.precondition_met().map_err(|e| invalid(e.to_string()))? == Some(false) {
            return Err(invalid(format!("acceptance profile: schedule {:?} violates the {:?} stepsize cap", run.schedule, run.cap)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_create_and_replace() {
        let mut v = json!({"run": {"m": 2}});
        apply_override(&mut v, "run.m", "8").unwrap();
        apply_override(&mut v, "output.dir", "out/x").unwrap();
        assert_eq!(v["run"]["m"], json!(8));
        assert_eq!(v["output"]["dir"], json!("out/x"));
        assert!(apply_override(&mut v, "run.m.x", "1").is_err());
        assert!(parse_set("novalue").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(from_value(json!({"kind": "verify-suite", "bogus": 1})).is_err());
    }

    #[test]
    fn hash_ignores_key_order() {
        let a = content_hash(&serde_json::from_str::<Value>(r#"{"a":1,"b":2}"#).unwrap());
        let b = content_hash(&serde_json::from_str::<Value>(r#"{"b":2,"a":1}"#).unwrap());
        assert_eq!(a, b);
    }
}
