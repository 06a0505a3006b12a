//! Config-driven experiment drivers.
//!
//! A config is a JSON document
//!
//! ```json
//! { "schema_version": 1, "experiment": "eigendecay", "seed": 0,
//!   "budget_s": 300, "params": { "m": 1000 } }
//! ```
//!
//! where `params` holds the experiment-specific settings (every field has a
//! default). Unknown keys are rejected at every level. Results are CSV tables,
//! a `summary.json` with fitted quantities and checks, and a
//! `provenance.json` sidecar.

pub mod concentration;
pub mod convergence;
pub mod eigendecay;
pub mod fit;
pub mod holder;
pub mod kernel_table;
pub mod noise;
pub mod odebound;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flow::NET_STREAM;
use crate::io::{render_csv, Cell};
use crate::net::{init, NetDims, NetworkParams};
use crate::numerics::rng::RngStream;

pub use concentration::{exp_concentration, seed_slope_stderr, ConcentrationParams};
pub use convergence::{exp_convergence, TrainParams};
pub use eigendecay::{exp_eigendecay, DecayMode, EigendecayParams};
pub use fit::{fit_line, fit_loglog, LineFit};
pub use holder::{exp_holder_perturbation, perturb_weights, HolderParams};
pub use kernel_table::{exp_kernel_table, KernelChoice, KernelTableParams};
pub use noise::{exp_sampling_noise, NoiseParams};
pub use odebound::{exp_odebound, OdeBoundExpParams};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_BUDGET_S: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Eigendecay,
    Noise,
    Concentration,
    Holder,
    Train,
    Odebound,
    KernelTable,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Eigendecay,
        ExperimentKind::Noise,
        ExperimentKind::Concentration,
        ExperimentKind::Holder,
        ExperimentKind::Train,
        ExperimentKind::Odebound,
        ExperimentKind::KernelTable,
    ];

    /// Name used in configs.
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Eigendecay => "eigendecay",
            ExperimentKind::Noise => "noise",
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::Holder => "holder",
            ExperimentKind::Train => "train",
            ExperimentKind::Odebound => "odebound",
            ExperimentKind::KernelTable => "kernel_table",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('-', "_");
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ExperimentParams {
    Eigendecay(EigendecayParams),
    Noise(NoiseParams),
    Concentration(ConcentrationParams),
    Holder(HolderParams),
    Train(Box<TrainParams>),
    Odebound(OdeBoundExpParams),
    KernelTable(KernelTableParams),
}

impl ExperimentParams {
    pub fn default_for(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::Eigendecay => Self::Eigendecay(Default::default()),
            ExperimentKind::Noise => Self::Noise(Default::default()),
            ExperimentKind::Concentration => Self::Concentration(Default::default()),
            ExperimentKind::Holder => Self::Holder(Default::default()),
            ExperimentKind::Train => Self::Train(Default::default()),
            ExperimentKind::Odebound => Self::Odebound(Default::default()),
            ExperimentKind::KernelTable => Self::KernelTable(Default::default()),
        }
    }

    fn from_value(kind: ExperimentKind, v: Value) -> Result<Self> {
        let e = |err: serde_json::Error| Error::Config(format!("params: {err}"));
        Ok(match kind {
            ExperimentKind::Eigendecay => Self::Eigendecay(serde_json::from_value(v).map_err(e)?),
            ExperimentKind::Noise => Self::Noise(serde_json::from_value(v).map_err(e)?),
            ExperimentKind::Concentration => Self::Concentration(serde_json::from_value(v).map_err(e)?),
            ExperimentKind::Holder => Self::Holder(serde_json::from_value(v).map_err(e)?),
            ExperimentKind::Train => Self::Train(serde_json::from_value(v).map_err(e)?),
            ExperimentKind::Odebound => Self::Odebound(serde_json::from_value(v).map_err(e)?),
            ExperimentKind::KernelTable => Self::KernelTable(serde_json::from_value(v).map_err(e)?),
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    experiment: ExperimentKind,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_budget")]
    budget_s: f64,
    #[serde(default)]
    params: Option<Value>,
}

fn default_budget() -> f64 {
    DEFAULT_BUDGET_S
}

/// A validated experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    /// Master seed for every random stream of the run.
    pub seed: u64,
    /// Wall-clock budget in seconds.
    pub budget_s: f64,
    pub params: ExperimentParams,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: kind,
            seed: 0,
            budget_s: DEFAULT_BUDGET_S,
            params: ExperimentParams::default_for(kind),
        }
    }

    /// Parses and validates a config document.
    pub fn from_value(v: Value) -> Result<Self> {
        let raw: RawConfig = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        if raw.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                raw.schema_version
            )));
        }
        let params = raw.params.unwrap_or_else(|| Value::Object(Map::new()));
        let cfg = Self {
            schema_version: raw.schema_version,
            experiment: raw.experiment,
            seed: raw.seed,
            budget_s: raw.budget_s,
            params: ExperimentParams::from_value(raw.experiment, params)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(v)
    }

    /// Reads a config file and applies `key.path=value` overrides before
    /// validation.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut v: Value = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        Self::from_value(v)
    }

    /// Fully expanded document, defaults included.
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("configs serialize")
    }

    /// SHA-256 of the expanded document with sorted keys, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&self.to_value()).expect("configs serialize");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.budget_s > 0.0) {
            return Err(Error::Config("budget_s must be positive".into()));
        }
        let kind_matches = matches!(
            (self.experiment, &self.params),
            (ExperimentKind::Eigendecay, ExperimentParams::Eigendecay(_))
                | (ExperimentKind::Noise, ExperimentParams::Noise(_))
                | (ExperimentKind::Concentration, ExperimentParams::Concentration(_))
                | (ExperimentKind::Holder, ExperimentParams::Holder(_))
                | (ExperimentKind::Train, ExperimentParams::Train(_))
                | (ExperimentKind::Odebound, ExperimentParams::Odebound(_))
                | (ExperimentKind::KernelTable, ExperimentParams::KernelTable(_))
        );
        if !kind_matches {
            return Err(Error::Config("params do not belong to the named experiment".into()));
        }
        match &self.params {
            ExperimentParams::Eigendecay(p) => p.validate(),
            ExperimentParams::Noise(p) => p.validate(),
            ExperimentParams::Concentration(p) => p.validate(),
            ExperimentParams::Holder(p) => p.validate(),
            ExperimentParams::Train(p) => p.validate(),
            ExperimentParams::Odebound(p) => p.validate(),
            ExperimentParams::KernelTable(p) => p.validate(),
        }
        .map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::Config(msg),
            other => other,
        })
    }
}

/// Sets `a.b.c = value` inside a JSON document. The value is parsed as JSON
/// when possible and taken as a string otherwise; missing objects on the
/// path are created.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override key '{key}' is malformed")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = match node {
            Value::Object(map) => map,
            Value::Null => {
                *node = Value::Object(Map::new());
                node.as_object_mut().expect("just created")
            }
            _ => {
                return Err(Error::Config(format!(
                    "override '{key}': '{}' is not an object",
                    parts[..i].join(".")
                )))
            }
        };
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        node = obj.entry((*part).to_string()).or_insert(Value::Null);
    }
    unreachable!("loop returns on the last key")
}

/// A named CSV table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    /// File stem of the CSV.
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row; panics if its length does not match the schema.
    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row length for table {}", self.name);
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of a column; text cells become NaN.
    pub fn numeric_column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[k].as_f64().unwrap_or(f64::NAN)).collect())
    }

    /// Rows whose text cell in `column` equals `value`.
    pub fn filter(&self, column: &str, value: &str) -> Vec<&Vec<Cell>> {
        let Some(k) = self.column_index(column) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .filter(|r| matches!(&r[k], Cell::Text(s) if s == value))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        render_csv(&self.columns, &self.rows)
    }
}

/// A pass/fail statement about a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

/// A binary output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub experiment: ExperimentKind,
    pub config_hash: String,
    pub master_seed: u64,
    pub tables: Vec<ResultTable>,
    /// Fitted quantities; deterministic for a given config.
    pub summary: Value,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
    /// Set when a numerical method gave up and the outputs are partial.
    pub failure: Option<String>,
}

impl ExperimentResult {
    pub fn table(&self, name: &str) -> Option<&ResultTable> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Writes every table, `summary.json`, the artifacts and
    /// `provenance.json` into `dir`, returning the written paths.
    pub fn write(&self, dir: &Path, provenance: &Provenance) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for t in &self.tables {
            let path = dir.join(format!("{}.csv", t.name));
            fs::write(&path, t.to_csv())?;
            written.push(path);
        }
        let summary = serde_json::json!({
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "master_seed": self.master_seed,
            "summary": self.summary,
            "checks": self.checks,
            "failure": self.failure,
        });
        let path = dir.join("summary.json");
        fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")?;
        written.push(path);
        for a in &self.artifacts {
            let path = dir.join(&a.file_name);
            fs::write(&path, &a.bytes)?;
            written.push(path);
        }
        let path = dir.join("provenance.json");
        fs::write(&path, serde_json::to_string_pretty(provenance)? + "\n")?;
        written.push(path);
        Ok(written)
    }
}

/// Run metadata written next to the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub experiment: ExperimentKind,
    pub schema_version: u32,
    pub config_hash: String,
    pub master_seed: u64,
    pub version: String,
    pub started_at: String,
    pub wall_seconds: f64,
}

impl Provenance {
    pub fn new(result: &ExperimentResult, started_at: String, wall_seconds: f64) -> Self {
        Self {
            experiment: result.experiment,
            schema_version: SCHEMA_VERSION,
            config_hash: result.config_hash.clone(),
            master_seed: result.master_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_at,
            wall_seconds,
        }
    }
}

/// Wall-clock guard checked between units of work.
#[derive(Debug, Clone, Copy)]
pub struct Budget {
    start: Instant,
    limit_s: f64,
}

impl Budget {
    pub fn new(limit_s: f64) -> Self {
        Self {
            start: Instant::now(),
            limit_s,
        }
    }

    pub fn elapsed_s(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    pub fn check(&self) -> Result<()> {
        let elapsed_s = self.elapsed_s();
        if elapsed_s > self.limit_s {
            return Err(Error::Budget {
                budget_s: self.limit_s,
                elapsed_s,
            });
        }
        Ok(())
    }
}

/// Network number `key` of a run with master seed `seed`.
pub fn seeded_network(dims: &NetDims, seed: u64, key: u64) -> NetworkParams {
    init(dims, &RngStream::new(seed, NET_STREAM).derive(key))
}

/// Runs the experiment named in the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let budget = Budget::new(cfg.budget_s);
    let out = match &cfg.params {
        ExperimentParams::Eigendecay(p) => exp_eigendecay(p, cfg.seed, &budget),
        ExperimentParams::Noise(p) => exp_sampling_noise(p, cfg.seed, &budget),
        ExperimentParams::Concentration(p) => exp_concentration(p, cfg.seed, &budget),
        ExperimentParams::Holder(p) => exp_holder_perturbation(p, cfg.seed, &budget),
        ExperimentParams::Train(p) => exp_convergence(p, cfg.seed, &budget),
        ExperimentParams::Odebound(p) => exp_odebound(p, cfg.seed, &budget),
        ExperimentParams::KernelTable(p) => exp_kernel_table(p, &budget),
    }?;
    budget.check()?;
    Ok(ExperimentResult {
        experiment: cfg.experiment,
        config_hash: cfg.hash(),
        master_seed: cfg.seed,
        tables: out.tables,
        summary: out.summary,
        checks: out.checks,
        artifacts: out.artifacts,
        failure: out.failure,
    })
}

/// What a driver hands back before provenance is attached.
#[derive(Debug, Clone, Default)]
pub struct DriverOutput {
    pub tables: Vec<ResultTable>,
    pub summary: Value,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
    /// Set when a numerical method gave up and the outputs are partial.
    pub failure: Option<String>,
}

/// `[2^lo, .., 2^hi]`.
pub(crate) fn powers_of_two(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 2f64.powi(k)).collect()
}

/// Rejects lists that are not geometric with ratio above one.
pub(crate) fn check_geometric(values: &[f64], what: &str) -> Result<()> {
    if values.len() < 2 || values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Config(format!("{what} must hold at least two positive values")));
    }
    let ratio = values[1] / values[0];
    let geometric = ratio > 1.0 && values.windows(2).all(|w| ((w[1] / w[0]) / ratio - 1.0).abs() < 1e-9);
    if !geometric {
        return Err(Error::Config(format!("{what} must be an increasing geometric sequence")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        for kind in ExperimentKind::ALL {
            let cfg = ExperimentConfig::new(kind);
            cfg.validate().unwrap();
            let back = ExperimentConfig::from_value(cfg.to_value()).unwrap();
            assert_eq!(back, cfg, "{kind}");
            assert_eq!(back.hash(), cfg.hash());
        }
    }

    #[test]
    fn minimal_document_uses_defaults() {
        let cfg = ExperimentConfig::from_json_str(r#"{"schema_version": 1, "experiment": "noise"}"#).unwrap();
        assert_eq!(cfg, ExperimentConfig::new(ExperimentKind::Noise));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let top = r#"{"schema_version": 1, "experiment": "noise", "colour": 1}"#;
        assert!(matches!(ExperimentConfig::from_json_str(top), Err(Error::Config(_))));
        let nested = r#"{"schema_version": 1, "experiment": "noise", "params": {"widht": 3}}"#;
        assert!(matches!(ExperimentConfig::from_json_str(nested), Err(Error::Config(_))));
        let version = r#"{"schema_version": 2, "experiment": "noise"}"#;
        assert!(ExperimentConfig::from_json_str(version).is_err());
        let name = r#"{"schema_version": 1, "experiment": "nope"}"#;
        assert!(ExperimentConfig::from_json_str(name).is_err());
    }

    #[test]
    fn overrides_set_nested_keys() {
        let mut v = serde_json::json!({"schema_version": 1, "experiment": "eigendecay"});
        apply_override(&mut v, "params.m=64").unwrap();
        apply_override(&mut v, "params.activations=[\"gelu\"]").unwrap();
        apply_override(&mut v, "params.mode=analytic").unwrap();
        let cfg = ExperimentConfig::from_value(v.clone()).unwrap();
        let ExperimentParams::Eigendecay(p) = &cfg.params else {
            panic!("wrong params")
        };
        assert_eq!(p.m, 64);
        assert_eq!(p.mode, DecayMode::Analytic);
        assert!(apply_override(&mut v, "params.m.x=1").is_err());
        assert!(apply_override(&mut v, "novalue").is_err());
        apply_override(&mut v, "params.bogus=1").unwrap();
        assert!(ExperimentConfig::from_value(v).is_err());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = ExperimentConfig::new(ExperimentKind::Noise);
        let mut b = a.clone();
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn budget_trips() {
        let b = Budget::new(1e-9);
        std::thread::sleep(std::time::Duration::from_millis(2));
        assert!(matches!(b.check(), Err(Error::Budget { .. })));
        assert!(Budget::new(100.0).check().is_ok());
    }

    #[test]
    fn geometric_lists() {
        assert!(check_geometric(&[64.0, 128.0, 256.0], "w").is_ok());
        assert!(check_geometric(&[64.0, 128.0, 200.0], "w").is_err());
        assert!(check_geometric(&[4.0, 2.0], "w").is_err());
        assert_eq!(powers_of_two(-2, 0), vec![0.25, 0.5, 1.0]);
    }

    #[test]
    fn table_helpers() {
        let mut t = ResultTable::new("x", &["tag", "v"]);
        t.push(vec!["a".into(), 1.0.into()]);
        t.push(vec!["b".into(), 2.0.into()]);
        assert_eq!(t.numeric_column("v").unwrap(), vec![1.0, 2.0]);
        assert_eq!(t.filter("tag", "b").len(), 1);
        assert!(t.to_csv().starts_with("tag,v\n"));
    }
}
