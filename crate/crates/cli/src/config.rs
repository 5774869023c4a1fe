//! Run configuration: a human-editable TOML document with `model`,
//! `process`, and `output` sections, plus `--set dotted.key=value`
//! overrides.
//!
//! Loading materializes every default, so the resolved config that lands in
//! output metadata is complete: parse -> materialize -> serialize -> parse
//! is a fixed point after one cycle. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use groupdyn_core::model::{AttractionMode, BiasMode, BiasSpec, ModelParams};
use groupdyn_core::sim::{InitSpec, ProcessKind, SimConfig};

use crate::AppError;

/// Environment variable holding the default output directory.
pub const OUTPUT_DIR_ENV: &str = "GROUPDYN_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub model: ModelSection,
    pub process: ProcessSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub k_groups: usize,
    pub beta: f64,
    pub attraction_mode: AttractionMode,
    pub theta_scalar: f64,
    pub bias: BiasSection,
    pub smoothing: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasSection {
    pub mode: BiasMode,
    pub mu: f64,
    pub sigma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explicit: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSection {
    #[serde(rename = "type")]
    pub kind: ProcessKind,
    pub t_steps: u64,
    pub init: InitSpec,
    pub seed: u64,
    pub eta_frac: f64,
    pub damping: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_every: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<String>,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        let directory = std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out"));
        Self {
            model: ModelSection {
                k_groups: 5,
                beta: 0.5,
                attraction_mode: AttractionMode::Full,
                theta_scalar: 1.0,
                bias: BiasSection {
                    mode: BiasMode::Frozen,
                    mu: 0.02,
                    sigma: 0.01,
                    explicit: None,
                },
                smoothing: 1e-12,
                floor: 1e-9,
            },
            process: ProcessSection {
                kind: ProcessKind::Entrant,
                t_steps: 1000,
                init: InitSpec::Range { lo: 1, hi: 10 },
                seed: 42,
                eta_frac: 0.05,
                damping: 0.1,
                record_every: None,
            },
            output: OutputSection {
                directory,
                formats: vec!["csv".into(), "json".into()],
            },
        }
    }
}

impl RunConfigFile {
    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            beta: self.model.beta,
            attraction_mode: self.model.attraction_mode,
            theta_scalar: self.model.theta_scalar,
            bias: BiasSpec {
                mode: self.model.bias.mode,
                mu: self.model.bias.mu,
                sigma: self.model.bias.sigma,
                explicit: self.model.bias.explicit.clone(),
            },
            smoothing: self.model.smoothing,
            floor: self.model.floor,
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            k_groups: self.model.k_groups,
            t_steps: self.process.t_steps,
            params: self.model_params(),
            init: self.process.init.clone(),
            seed: self.process.seed,
            process: self.process.kind,
            eta_frac: self.process.eta_frac,
            damping: self.process.damping,
            record_every: self.process.record_every,
        }
    }

    /// Full validation through the simulation config rules.
    pub fn validate(&self) -> Result<(), AppError> {
        for fmt in &self.output.formats {
            if fmt != "csv" && fmt != "json" {
                return Err(AppError::Config(format!(
                    "unknown output format '{fmt}' (expected csv or json)"
                )));
            }
        }
        self.sim_config()
            .validate()
            .map_err(|e| AppError::Config(e.to_string()))
    }

    pub fn wants_csv(&self) -> bool {
        self.output.formats.iter().any(|f| f == "csv")
    }

    pub fn wants_json(&self) -> bool {
        self.output.formats.iter().any(|f| f == "json")
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Loads the config: defaults, then the optional file, then `--set`
/// overrides, merged in that order and materialized into a complete
/// document.
pub fn load_config(path: Option<&Path>, sets: &[String]) -> Result<RunConfigFile, AppError> {
    let mut tree = toml_value(&RunConfigFile::default());
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(AppError::Io)?;
        let file_tree: toml::Value = toml::from_str(&text)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        merge(&mut tree, &file_tree);
    }
    for entry in sets {
        apply_set(&mut tree, entry)?;
    }
    let config: RunConfigFile = tree
        .try_into()
        .map_err(|e| AppError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

fn toml_value<T: Serialize>(value: &T) -> toml::Value {
    toml::Value::try_from(value).expect("serializable config")
}

/// Right-biased deep merge of TOML tables.
pub fn merge(base: &mut toml::Value, overlay: &toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(base_table), toml::Value::Table(overlay_table)) => {
            for (key, value) in overlay_table {
                match base_table.get_mut(key) {
                    Some(existing) if existing.is_table() && value.is_table() => {
                        merge(existing, value);
                    }
                    _ => {
                        base_table.insert(key.clone(), value.clone());
                    }
                }
            }
        }
        (base, overlay) => *base = overlay.clone(),
    }
}

/// Applies one `dotted.key=value` override. The value is parsed as a TOML
/// literal (numbers, booleans, arrays, inline tables); anything that does
/// not parse is taken as a bare string.
pub fn apply_set(tree: &mut toml::Value, entry: &str) -> Result<(), AppError> {
    let (key, raw) = entry
        .split_once('=')
        .ok_or_else(|| AppError::Config(format!("--set '{entry}' is not KEY=VALUE")))?;
    let value = parse_literal(raw.trim());

    let mut node = tree;
    let segments: Vec<&str> = key.trim().split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(AppError::Config(format!("--set key '{key}' is malformed")));
    }
    for segment in &segments[..segments.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| AppError::Config(format!("--set key '{key}' crosses a non-table")))?;
        node = table
            .entry((*segment).to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| AppError::Config(format!("--set key '{key}' crosses a non-table")))?;
    table.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    if let Ok(toml::Value::Table(mut t)) = toml::from_str::<toml::Value>(&wrapped) {
        if let Some(v) = t.remove("v") {
            return v;
        }
    }
    toml::Value::String(raw.to_string())
}
