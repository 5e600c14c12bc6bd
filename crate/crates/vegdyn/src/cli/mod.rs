//! Experiment runner behind the `vegdyn` binary: configuration parsing,
//! task dispatch, artifact and manifest writing.
//!
//! Invocation: `vegdyn <task|recipe> --config <path> --out <dir>
//! [--seed S] [--set key=value ...]`. Tasks read a JSON configuration;
//! recipes carry their own and accept the same overrides. Exit codes:
//! 0 success, 2 configuration/parse error, 3 numeric abort (partial
//! artifacts are kept with a `.partial` suffix).

mod config;
mod recipes;
mod run;

pub use config::{
    apply_overrides, AnalysisSection, ExperimentConfig, GkeSection, QsdSection, SimSection,
    Task,
};
pub use recipes::{recipe, recipe_names};
pub use run::{run_task, ArtifactSink};

use crate::error::{Error, Result};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// A parsed command line.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub name: String,
    pub config_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub manifest_path: PathBuf,
    pub artifacts: Vec<String>,
}

fn is_numeric_abort(e: &Error) -> bool {
    matches!(
        e,
        Error::PositivityViolation { .. }
            | Error::NonFinite { .. }
            | Error::EigenNoConvergence { .. }
            | Error::EventCapExceeded { .. }
    )
}

/// Exit code for an error, per the documented contract.
pub fn exit_code(e: &Error) -> i32 {
    if is_numeric_abort(e) {
        3
    } else if matches!(e, Error::Io(_)) {
        1
    } else {
        2
    }
}

fn resolve_subruns(inv: &Invocation) -> Result<Vec<(String, ExperimentConfig)>> {
    let mut raw: Vec<(String, serde_json::Value)> = if Task::parse(&inv.name).is_some() {
        let path = inv.config_path.as_ref().ok_or_else(|| {
            Error::Config(format!("task {:?} requires --config <path>", inv.name))
        })?;
        let text = std::fs::read_to_string(path)?;
        let mut value: serde_json::Value = serde_json::from_str(&text)?;
        if !value.is_object() {
            return Err(Error::Config("configuration must be a JSON object".into()));
        }
        value["task"] = serde_json::Value::String(inv.name.clone());
        vec![(String::new(), value)]
    } else if let Some(subs) = recipes::recipe(&inv.name) {
        if inv.config_path.is_some() {
            return Err(Error::Config(format!(
                "recipe {:?} carries its own configuration; use --set overrides instead of --config",
                inv.name
            )));
        }
        subs.into_iter()
            .map(|(p, c)| Ok((p, c.to_value()?)))
            .collect::<Result<Vec<_>>>()?
    } else {
        return Err(Error::Config(format!(
            "unknown task or recipe {:?}; tasks: simulate, gke, meanfield, qsd, equilibria, \
             converge, chaos, fronts, endstates; recipes: {}",
            inv.name,
            recipes::recipe_names().join(", ")
        )));
    };

    let mut out = Vec::with_capacity(raw.len());
    for (prefix, mut value) in raw.drain(..) {
        if let Some(seed) = inv.seed {
            value = apply_overrides(value, &[format!("sim.seed={seed}")])?;
        }
        value = apply_overrides(value, &inv.overrides)?;
        out.push((prefix, ExperimentConfig::from_value(value)?));
    }
    Ok(out)
}

fn write_manifest(
    inv: &Invocation,
    runs: &[serde_json::Value],
    wall_time_s: f64,
    error: Option<String>,
) -> Result<PathBuf> {
    let manifest = serde_json::json!({
        "name": inv.name,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": inv.seed,
        "overrides": inv.overrides,
        "wall_time_s": wall_time_s,
        "runs": runs,
        "error": error,
    });
    let path = inv.out_dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Parse, dispatch, and write artifacts plus `manifest.json`. On a numeric
/// abort the incomplete artifacts are renamed with a `.partial` suffix and
/// the manifest records the failure before the error is returned.
pub fn run(inv: &Invocation) -> Result<RunReport> {
    let subs = resolve_subruns(inv)?;
    std::fs::create_dir_all(&inv.out_dir)?;
    let t0 = Instant::now();
    let mut run_records = Vec::new();
    let mut all_artifacts = Vec::new();
    for (prefix, cfg) in &subs {
        let mut sink = ArtifactSink::new(&inv.out_dir, prefix)?;
        match run_task(cfg, &mut sink) {
            Ok(summary) => {
                let names = sink.artifact_names();
                all_artifacts.extend(names.clone());
                run_records.push(serde_json::json!({
                    "prefix": prefix,
                    "config": cfg.to_value()?,
                    "artifacts": names,
                    "summary": summary,
                }));
            }
            Err(e) if is_numeric_abort(&e) => {
                let partial = sink.mark_partial();
                run_records.push(serde_json::json!({
                    "prefix": prefix,
                    "config": cfg.to_value()?,
                    "artifacts": partial,
                    "summary": { "error": e.to_string() },
                }));
                write_manifest(
                    inv,
                    &run_records,
                    t0.elapsed().as_secs_f64(),
                    Some(e.to_string()),
                )?;
                return Err(e);
            }
            Err(e) => return Err(e),
        }
    }
    let manifest_path = write_manifest(inv, &run_records, t0.elapsed().as_secs_f64(), None)?;
    Ok(RunReport {
        manifest_path,
        artifacts: all_artifacts,
    })
}

/// Binary entry point: run and translate errors into exit codes.
pub fn main_entry(inv: &Invocation) -> i32 {
    match run(inv) {
        Ok(report) => {
            println!(
                "wrote {} artifacts and {}",
                report.artifacts.len(),
                report.manifest_path.display()
            );
            0
        }
        Err(e) => {
            eprintln!("vegdyn: {e}");
            exit_code(&e)
        }
    }
}

/// Convenience used by tests: run a task on a config file.
pub fn run_file(name: &str, config: &Path, out: &Path, overrides: &[String]) -> Result<RunReport> {
    run(&Invocation {
        name: name.to_string(),
        config_path: Some(config.to_path_buf()),
        out_dir: out.to_path_buf(),
        seed: None,
        overrides: overrides.to_vec(),
    })
}
