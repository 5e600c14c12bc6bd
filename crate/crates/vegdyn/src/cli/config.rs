//! Experiment configuration: strict JSON schema plus dotted-path
//! overrides.

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::qsd::TimeScale;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Simulate,
    Gke,
    Meanfield,
    Qsd,
    Equilibria,
    Converge,
    Chaos,
    Fronts,
    /// End-state scatter over initial cover fractions (the finite-size
    /// side of the bifurcation diagram).
    Endstates,
}

impl Task {
    pub fn parse(name: &str) -> Option<Task> {
        serde_json::from_value(serde_json::Value::String(name.to_string())).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub n_sites: usize,
    pub t_end: f64,
    pub seed: u64,
    pub replicas: usize,
    pub snapshot_times: Option<Vec<f64>>,
    pub event_cap: usize,
    /// Large runs can switch the bulky per-event/per-site artifacts off.
    pub write_events: bool,
    pub write_snapshots: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            n_sites: 1000,
            t_end: 100.0,
            seed: 1,
            replicas: 1,
            snapshot_times: None,
            event_cap: 10_000_000,
            write_events: true,
            write_snapshots: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GkeSection {
    /// Euler step; defaults to 0.01 on patch domains and 0.05 on continuum
    /// domains.
    pub h: Option<f64>,
    pub nodes: usize,
    pub t_end: f64,
    pub snapshot_times: Option<Vec<f64>>,
}

impl Default for GkeSection {
    fn default() -> Self {
        Self {
            h: None,
            nodes: 200,
            t_end: 100.0,
            snapshot_times: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QsdSection {
    pub n_list: Vec<usize>,
    pub jbar_grid: Vec<f64>,
    pub time_scale: TimeScale,
    pub tol: f64,
}

impl Default for QsdSection {
    fn default() -> Self {
        Self {
            n_list: vec![250, 500, 1000],
            jbar_grid: (4..=20).map(|i| i as f64 * 0.05).collect(),
            time_scale: TimeScale::Matrix,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// Jbar grid for equilibria/endstates sweeps.
    pub jbar_grid: Option<Vec<f64>>,
    /// System sizes for the convergence study.
    pub n_list: Vec<usize>,
    pub site_pairs: usize,
    /// State label tracked by front detection.
    pub front_state: String,
    pub front_threshold: f64,
    /// Initial cover fractions for the endstates task.
    pub init_fractions: Vec<f64>,
    /// Location queried by the meanfield task.
    pub location: f64,
    pub exclude_absorbed: bool,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            jbar_grid: None,
            n_list: vec![125, 500, 2000, 8000],
            site_pairs: 100,
            front_state: "F".into(),
            front_threshold: 0.5,
            init_fractions: (1..=9).map(|i| i as f64 * 0.1).collect(),
            location: 0.0,
            exclude_absorbed: false,
        }
    }
}

/// One experiment: a task plus the sections it reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub model: ModelConfig,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub gke: GkeSection,
    #[serde(default)]
    pub qsd: QsdSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        Self::from_value(value)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        serde_json::from_value(value).map_err(Error::Json)
    }

    pub fn to_value(&self) -> Result<serde_json::Value> {
        serde_json::to_value(self).map_err(Error::Json)
    }
}

/// Apply `key=value` overrides with dotted paths (e.g. `sim.n_sites=500`)
/// to a raw configuration value. Values parse as JSON when possible and
/// fall back to strings.
pub fn apply_overrides(mut value: serde_json::Value, overrides: &[String]) -> Result<serde_json::Value> {
    for entry in overrides {
        let (path, raw) = entry.split_once('=').ok_or_else(|| {
            Error::Config(format!("override {entry:?} is not of the form key=value"))
        })?;
        let parsed: serde_json::Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let parts: Vec<&str> = path.split('.').collect();
        set_path(&mut value, &parts, parsed, path)?;
    }
    Ok(value)
}

fn set_path(
    value: &mut serde_json::Value,
    parts: &[&str],
    parsed: serde_json::Value,
    full_path: &str,
) -> Result<()> {
    let map = value.as_object_mut().ok_or_else(|| {
        Error::Config(format!(
            "override path {full_path:?} descends into a non-object"
        ))
    })?;
    match parts {
        [] => Err(Error::Config(format!("empty override path {full_path:?}"))),
        [last] => {
            map.insert((*last).to_string(), parsed);
            Ok(())
        }
        [head, rest @ ..] => {
            let next = map
                .entry((*head).to_string())
                .or_insert_with(|| serde_json::json!({}));
            set_path(next, rest, parsed, full_path)
        }
    }
}
