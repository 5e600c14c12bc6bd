//! Runner integration: artifact determinism, manifest round-trips, exit
//! codes, strict parsing.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use vegdyn::cli::{exit_code, run, ExperimentConfig, Invocation};
use vegdyn::error::Error;

static DIR_SEQ: AtomicU64 = AtomicU64::new(0);

fn scratch_dir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!(
        "vegdyn-test-{}-{}-{}",
        std::process::id(),
        tag,
        DIR_SEQ.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p
}

const GF_PATCH: &str = r#"{
  "task": "simulate",
  "model": {
    "family": "gf",
    "jbar": 0.9,
    "domain": {"type": "patches", "count": 1},
    "measure": {"kind": "discrete", "weights": [1.0]},
    "init": {"kind": "constant", "p": [0.6, 0.4]}
  },
  "sim": {"n_sites": 150, "t_end": 15.0, "seed": 7}
}"#;

fn invoke(name: &str, config: Option<PathBuf>, out: PathBuf, overrides: &[&str]) -> Invocation {
    Invocation {
        name: name.into(),
        config_path: config,
        out_dir: out,
        seed: None,
        overrides: overrides.iter().map(|s| s.to_string()).collect(),
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = scratch_dir("rerun");
    let cfg = write_config(&dir, GF_PATCH);
    let out_a = scratch_dir("rerun-a");
    let out_b = scratch_dir("rerun-b");
    run(&invoke("simulate", Some(cfg.clone()), out_a.clone(), &[])).unwrap();
    run(&invoke("simulate", Some(cfg), out_b.clone(), &[])).unwrap();
    for name in ["events_000.csv", "snapshots_000.csv", "occupancy_000.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical reruns");
        assert!(!a.is_empty());
    }
}

#[test]
fn seed_changes_output() {
    let dir = scratch_dir("seed");
    let cfg = write_config(&dir, GF_PATCH);
    let out_a = scratch_dir("seed-a");
    let out_b = scratch_dir("seed-b");
    run(&invoke("simulate", Some(cfg.clone()), out_a.clone(), &[])).unwrap();
    let mut inv = invoke("simulate", Some(cfg), out_b.clone(), &[]);
    inv.seed = Some(8);
    run(&inv).unwrap();
    let a = std::fs::read(out_a.join("events_000.csv")).unwrap();
    let b = std::fs::read(out_b.join("events_000.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn manifest_round_trips_resolved_config() {
    let dir = scratch_dir("manifest");
    let cfg_path = write_config(&dir, GF_PATCH);
    let out = scratch_dir("manifest-out");
    run(&invoke(
        "simulate",
        Some(cfg_path),
        out.clone(),
        &["sim.n_sites=99"],
    ))
    .unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
            .unwrap();
    let stored = manifest["runs"][0]["config"].clone();
    let parsed = ExperimentConfig::from_value(stored).unwrap();
    assert_eq!(parsed.sim.n_sites, 99);
    assert_eq!(parsed.sim.seed, 7);
    // Every artifact named in the manifest exists and starts with a header
    // row.
    for a in manifest["runs"][0]["artifacts"].as_array().unwrap() {
        let text = std::fs::read_to_string(out.join(a.as_str().unwrap())).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.contains(','), "no header in {a}: {header}");
    }
}

#[test]
fn parse_errors_exit_2() {
    let dir = scratch_dir("bad");
    let out = scratch_dir("bad-out");
    // Empty file.
    let empty = write_config(&dir, "");
    let err = run(&invoke("simulate", Some(empty), out.clone(), &[])).unwrap_err();
    assert_eq!(exit_code(&err), 2);
    // Unknown key under strict parsing.
    let unknown = dir.join("unknown.json");
    std::fs::write(&unknown, GF_PATCH.replace("\"sim\"", "\"simulation\"")).unwrap();
    let err = run(&invoke("simulate", Some(unknown), out.clone(), &[])).unwrap_err();
    assert_eq!(exit_code(&err), 2);
    // Unknown task or recipe name.
    let cfg = write_config(&dir, GF_PATCH);
    let err = run(&invoke("fig9_dreams", Some(cfg), out, &[])).unwrap_err();
    assert_eq!(exit_code(&err), 2);
    assert!(err.to_string().contains("unknown task or recipe"));
}

#[test]
fn numeric_abort_exits_3_and_keeps_manifest() {
    let dir = scratch_dir("abort");
    let cfg = write_config(&dir, GF_PATCH);
    let out = scratch_dir("abort-out");
    let err = run(&invoke(
        "simulate",
        Some(cfg),
        out.clone(),
        &["sim.event_cap=5", "sim.t_end=50.0", "sim.n_sites=500"],
    ))
    .unwrap_err();
    assert!(matches!(err, Error::EventCapExceeded { .. }), "{err}");
    assert_eq!(exit_code(&err), 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
            .unwrap();
    assert!(manifest["error"].as_str().unwrap().contains("event cap"));
}

#[test]
fn gke_task_runs_and_conserves() {
    let dir = scratch_dir("gke");
    let cfg = write_config(
        &dir,
        &GF_PATCH.replace("\"task\": \"simulate\"", "\"task\": \"gke\""),
    );
    let out = scratch_dir("gke-out");
    run(&invoke("gke", Some(cfg), out.clone(), &["gke.t_end=20.0"])).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
            .unwrap();
    let dev = manifest["runs"][0]["summary"]["max_simplex_deviation"]
        .as_f64()
        .unwrap();
    assert!(dev < 1e-10, "conservation drift {dev}");
    let fields = std::fs::read_to_string(out.join("fields.csv")).unwrap();
    assert!(fields.starts_with("t,node,pos,P_G,P_F"));
}

#[test]
fn recipe_expands_to_prefixed_artifacts() {
    let out = scratch_dir("recipe-out");
    // Shrink the recipe's grids so the test stays quick.
    run(&Invocation {
        name: "fig3_qsd".into(),
        config_path: None,
        out_dir: out.clone(),
        seed: None,
        overrides: vec![
            "qsd.n_list=[50,100]".into(),
            "qsd.jbar_grid=[0.3,0.6]".into(),
        ],
    })
    .unwrap();
    let rho = std::fs::read_to_string(out.join("qsd_rho.csv")).unwrap();
    assert!(rho.starts_with("N,jbar,rho"));
    assert_eq!(rho.lines().count(), 5, "header + 4 sweep rows");
    assert!(out.join("qsd_qsd.csv").exists());
    // Recipes refuse an external --config.
    let dir = scratch_dir("recipe-cfg");
    let cfg = write_config(&dir, GF_PATCH);
    let err = run(&invoke("fig3_qsd", Some(cfg), scratch_dir("recipe-x"), &[])).unwrap_err();
    assert_eq!(exit_code(&err), 2);
}

#[test]
fn endstates_task_sweeps_fractions() {
    let dir = scratch_dir("endstates");
    let cfg = write_config(
        &dir,
        &GF_PATCH.replace("\"task\": \"simulate\"", "\"task\": \"endstates\""),
    );
    let out = scratch_dir("endstates-out");
    run(&invoke(
        "endstates",
        Some(cfg),
        out.clone(),
        &[
            "sim.n_sites=100",
            "sim.t_end=10.0",
            "sim.replicas=2",
            "analysis.init_fractions=[0.2,0.8]",
            "analysis.jbar_grid=[0.7]",
        ],
    ))
    .unwrap();
    let text = std::fs::read_to_string(out.join("endstates.csv")).unwrap();
    assert!(text.starts_with("jbar,init_grass,seed,final_grass,absorbed"));
    assert_eq!(text.lines().count(), 1 + 4, "header + 2 fractions x 2 seeds");
}

#[test]
fn partial_suffix_marks_incomplete_artifacts() {
    let out = scratch_dir("partial");
    let mut sink = vegdyn::cli::ArtifactSink::new(&out, "x_").unwrap();
    {
        use std::io::Write;
        let mut w = sink.create("data.csv").unwrap();
        writeln!(w, "a,b").unwrap();
    }
    let renamed = sink.mark_partial();
    assert_eq!(renamed, vec!["x_data.csv.partial".to_string()]);
    assert!(out.join("x_data.csv.partial").exists());
    assert!(!out.join("x_data.csv").exists());
}
