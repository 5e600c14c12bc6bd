//! Task execution: dispatch a parsed configuration, write CSV artifacts
//! and a manifest.

use crate::analysis;
use crate::cli::config::{ExperimentConfig, Task};
use crate::error::{Error, Result};
use crate::gke::{self, Boundary, GkeSolver, ProbabilityField};
use crate::meanfield::{ensemble_occupancy, RateSchedule};
use crate::model::{build_model, Domain, InitialLaw, ModelSpec};
use crate::qsd;
use crate::rng;
use crate::ssa::{simulate, SimParams};
use rayon::prelude::*;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Records artifacts as they are created so numeric aborts can mark the
/// incomplete set with a `.partial` suffix.
pub struct ArtifactSink {
    dir: PathBuf,
    prefix: String,
    written: Vec<PathBuf>,
}

impl ArtifactSink {
    pub fn new(dir: &Path, prefix: &str) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            prefix: prefix.to_string(),
            written: Vec::new(),
        })
    }

    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(format!("{}{}", self.prefix, name));
        let f = File::create(&path)?;
        self.written.push(path);
        Ok(BufWriter::new(f))
    }

    pub fn artifact_names(&self) -> Vec<String> {
        self.written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect()
    }

    /// Rename everything written so far with a `.partial` suffix.
    pub fn mark_partial(&mut self) -> Vec<String> {
        let mut renamed = Vec::new();
        for p in &self.written {
            let mut q = p.clone();
            q.set_file_name(format!(
                "{}.partial",
                p.file_name().unwrap().to_string_lossy()
            ));
            if std::fs::rename(p, &q).is_ok() {
                renamed.push(q.file_name().unwrap().to_string_lossy().into_owned());
            }
        }
        renamed
    }
}

fn boundary_for(domain: Domain) -> Boundary {
    match domain {
        Domain::Ring { .. } => Boundary::Periodic,
        Domain::Interval { .. } => Boundary::Reflecting,
        Domain::Patches { .. } => Boundary::None,
    }
}

fn grid_nodes_for(model: &ModelSpec, requested: usize) -> usize {
    match model.domain() {
        Domain::Patches { count } => count,
        _ => requested,
    }
}

fn default_h(model: &ModelSpec, requested: Option<f64>) -> f64 {
    requested.unwrap_or(match model.domain() {
        Domain::Patches { .. } => 0.01,
        _ => 0.05,
    })
}

fn default_times(t_end: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
}

/// Execute one task, writing its artifacts through the sink. Returns a
/// task-specific JSON summary.
pub fn run_task(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<serde_json::Value> {
    match cfg.task {
        Task::Simulate => task_simulate(cfg, sink),
        Task::Gke => task_gke(cfg, sink),
        Task::Meanfield => task_meanfield(cfg, sink),
        Task::Qsd => task_qsd(cfg, sink),
        Task::Equilibria => task_equilibria(cfg, sink),
        Task::Converge => task_converge(cfg, sink),
        Task::Chaos => task_chaos(cfg, sink),
        Task::Fronts => task_fronts(cfg, sink),
        Task::Endstates => task_endstates(cfg, sink),
    }
}

fn task_simulate(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<serde_json::Value> {
    let model = build_model(&cfg.model)?;
    let labels = model.states().labels().to_vec();
    let times = cfg
        .sim
        .snapshot_times
        .clone()
        .unwrap_or_else(|| default_times(cfg.sim.t_end, 50));
    let mut summary = Vec::new();
    for rep in 0..cfg.sim.replicas.max(1) {
        let mut params = SimParams::new(
            cfg.sim.n_sites,
            cfg.sim.t_end,
            rng::replica_seed(cfg.sim.seed, rep as u64),
        )
        .snapshots(times.clone());
        params.event_cap = cfg.sim.event_cap;
        let out = simulate(&model, &params)?;
        if cfg.sim.write_events {
            let w = sink.create(&format!("events_{rep:03}.csv"))?;
            out.trajectory.write_events_csv(&labels, w)?;
        }
        if cfg.sim.write_snapshots {
            let w = sink.create(&format!("snapshots_{rep:03}.csv"))?;
            out.write_snapshots_csv(&labels, w)?;
        }
        let mut w = sink.create(&format!("occupancy_{rep:03}.csv"))?;
        write!(w, "t")?;
        for l in &labels {
            write!(w, ",{l}")?;
        }
        writeln!(w)?;
        for (t, frac) in times.iter().zip(out.snapshot_fractions(model.n_states())) {
            write!(w, "{t}")?;
            for v in frac {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        summary.push(serde_json::json!({
            "replica": rep,
            "events": out.trajectory.events.len(),
            "absorbed_at": out.trajectory.absorbed,
        }));
    }
    Ok(serde_json::json!({ "replicas": summary }))
}

fn task_gke(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<serde_json::Value> {
    let model = build_model(&cfg.model)?;
    let grid = gke::make_grid(
        model.measure(),
        grid_nodes_for(&model, cfg.gke.nodes),
        boundary_for(model.domain()),
    )?;
    let solver = GkeSolver::new(&model, &grid)?;
    let init = ProbabilityField::from_initial_law(&model, &grid)?;
    let h = default_h(&model, cfg.gke.h);
    let times = cfg
        .gke
        .snapshot_times
        .clone()
        .unwrap_or_else(|| default_times(cfg.gke.t_end, 50));

    let mut w = sink.create("fields.csv")?;
    write!(w, "t,node,pos")?;
    for l in model.states().labels() {
        write!(w, ",P_{l}")?;
    }
    writeln!(w)?;
    let mut worst_sum_dev: f64 = 0.0;
    // Snapshots stream straight into the artifact so an abort leaves the
    // rows written so far on disk.
    let result = gke::integrate_with(&solver, &init, h, cfg.gke.t_end, &times, |t, f| {
        worst_sum_dev = worst_sum_dev.max(f.max_sum_deviation());
        for (i, pos) in grid.nodes().iter().enumerate() {
            let _ = write!(w, "{t},{i},{pos}");
            for v in f.node(i) {
                let _ = write!(w, ",{v}");
            }
            let _ = writeln!(w);
        }
    });
    w.flush()?;
    let series = result?;
    let last = series.fields.last().ok_or_else(|| {
        Error::InvalidInput("no snapshots recorded; provide snapshot times".into())
    })?;
    let final_occ: Vec<f64> = (0..model.n_states())
        .map(|s| gke::quadrature(&last.state_values(s), &grid))
        .collect::<Result<_>>()?;
    Ok(serde_json::json!({
        "h": h,
        "nodes": grid.len(),
        "max_simplex_deviation": worst_sum_dev,
        "final_occupancy": final_occ,
    }))
}

fn task_meanfield(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<serde_json::Value> {
    let model = build_model(&cfg.model)?;
    let grid = gke::make_grid(
        model.measure(),
        grid_nodes_for(&model, cfg.gke.nodes),
        boundary_for(model.domain()),
    )?;
    let init = ProbabilityField::from_initial_law(&model, &grid)?;
    let h = default_h(&model, cfg.gke.h);
    let schedule = RateSchedule::build(&model, &grid, &init, h, cfg.gke.t_end)?;
    let times = cfg
        .gke
        .snapshot_times
        .clone()
        .unwrap_or_else(|| default_times(cfg.gke.t_end, 20));
    let n_replicas = cfg.sim.replicas.max(1);
    let ens = ensemble_occupancy(
        &schedule,
        cfg.analysis.location,
        n_replicas,
        &times,
        cfg.sim.seed,
    )?;
    let w = sink.create("occupancy.csv")?;
    ens.write_csv(model.states().labels(), w)?;
    // Deviation from the driving solution in binomial standard errors.
    let mut worst_z: f64 = 0.0;
    for (i, t) in times.iter().enumerate() {
        let p = schedule.law_at(*t, cfg.analysis.location)?;
        for s in 0..model.n_states() {
            let se = (p[s] * (1.0 - p[s]) / n_replicas as f64).sqrt().max(1e-12);
            worst_z = worst_z.max((ens.freq[i][s] - p[s]).abs() / se);
        }
    }
    Ok(serde_json::json!({
        "replicas": n_replicas,
        "max_deviation_stderr_units": worst_z,
    }))
}

fn task_qsd(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<serde_json::Value> {
    let sweep = qsd::qsd_sweep(
        &cfg.qsd.n_list,
        &cfg.qsd.jbar_grid,
        &cfg.model.phi,
        cfg.qsd.time_scale,
    )?;
    let w = sink.create("rho.csv")?;
    sweep.write_rho_csv(w)?;
    let w = sink.create("qsd.csv")?;
    sweep.write_qsd_csv(w)?;
    Ok(serde_json::json!({
        "time_scale": cfg.qsd.time_scale,
        "monotonicity_violations": sweep.monotonicity_violations,
    }))
}

fn task_equilibria(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<serde_json::Value> {
    let grid = cfg
        .analysis
        .jbar_grid
        .clone()
        .unwrap_or_else(|| (20..=180).map(|i| i as f64 * 0.01).collect());
    let diagram = analysis::bifurcation_sweep(&grid, &cfg.model.phi)?;
    let w = sink.create("branches.csv")?;
    diagram.write_csv(w)?;
    let mut w = sink.create("bifurcations.csv")?;
    writeln!(w, "kind,jbar")?;
    for sn in &diagram.saddle_nodes {
        writeln!(w, "saddle_node,{sn}")?;
    }
    if let Some(tc) = diagram.transcritical {
        writeln!(w, "transcritical,{tc}")?;
    }
    Ok(serde_json::json!({
        "saddle_nodes": diagram.saddle_nodes,
        "transcritical": diagram.transcritical,
    }))
}

fn task_converge(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<serde_json::Value> {
    let model = build_model(&cfg.model)?;
    let opts = analysis::StudyOptions {
        exclude_absorbed: cfg.analysis.exclude_absorbed,
        snapshot_times: cfg.sim.snapshot_times.clone(),
        gke_nodes: cfg.gke.nodes,
        gke_h: cfg.gke.h,
    };
    let study = analysis::convergence_study(
        &model,
        &cfg.analysis.n_list,
        cfg.sim.replicas,
        cfg.sim.t_end,
        cfg.sim.seed,
        &opts,
    )?;
    let w = sink.create("converge.csv")?;
    study.write_csv(w)?;
    Ok(serde_json::json!({
        "errors": study.errors,
        "slope": study.slope.map(|(s, _)| s),
        "slope_ci95": study.slope.map(|(_, c)| c),
        "excluded_replicas": study.excluded_replicas,
    }))
}

fn task_chaos(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<serde_json::Value> {
    let model = build_model(&cfg.model)?;
    let report = analysis::pairwise_correlation(
        &model,
        cfg.sim.n_sites,
        cfg.analysis.site_pairs,
        cfg.sim.t_end,
        cfg.sim.replicas,
        cfg.sim.seed,
    )?;
    let w = sink.create("chaos.csv")?;
    report.write_csv(model.states().labels(), w)?;
    Ok(serde_json::json!({
        "pooled_max_abs_corr": report.pooled_max_abs,
        "per_pair_max_abs_corr": report.per_pair_max_abs,
        "degenerate": report.degenerate,
    }))
}

fn task_fronts(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<serde_json::Value> {
    let model = build_model(&cfg.model)?;
    let state = model
        .states()
        .index_of(&cfg.analysis.front_state)
        .ok_or_else(|| {
            Error::Config(format!(
                "front_state {:?} is not a state of the model",
                cfg.analysis.front_state
            ))
        })?;
    let grid = gke::make_grid(
        model.measure(),
        grid_nodes_for(&model, cfg.gke.nodes),
        boundary_for(model.domain()),
    )?;
    let solver = GkeSolver::new(&model, &grid)?;
    let init = ProbabilityField::from_initial_law(&model, &grid)?;
    let h = default_h(&model, cfg.gke.h);
    let times = cfg
        .gke
        .snapshot_times
        .clone()
        .unwrap_or_else(|| default_times(cfg.gke.t_end, 50));
    let series = gke::integrate(&solver, &init, h, cfg.gke.t_end, &times)?;
    let mut w = sink.create("fronts.csv")?;
    writeln!(w, "t,position")?;
    let mut fronts = Vec::new();
    for (t, f) in series.times.iter().zip(&series.fields) {
        let pos = analysis::front_position(
            grid.nodes(),
            &f.state_values(state),
            cfg.analysis.front_threshold,
        )?;
        match pos {
            Some(p) => writeln!(w, "{t},{p}")?,
            None => writeln!(w, "{t},")?,
        }
        fronts.push(pos);
    }
    // Speed over the trailing half of the snapshots.
    let half = series.times.len() / 2;
    let speed = analysis::wave_speed(&series.times[half..], &fronts[half..])?;
    Ok(serde_json::json!({
        "speed": speed,
        "threshold": cfg.analysis.front_threshold,
    }))
}

fn task_endstates(cfg: &ExperimentConfig, sink: &mut ArtifactSink) -> Result<serde_json::Value> {
    let jbars = cfg
        .analysis
        .jbar_grid
        .clone()
        .unwrap_or_else(|| vec![cfg.model.jbar]);
    if build_model(&cfg.model)?.n_states() != 2 {
        return Err(Error::Config(
            "the endstates task sweeps initial grass cover of the two-state model".into(),
        ));
    }
    let fractions = cfg.analysis.init_fractions.clone();
    let replicas = cfg.sim.replicas.max(1);
    let mut cases = Vec::new();
    for jbar in &jbars {
        for frac in &fractions {
            for rep in 0..replicas {
                cases.push((*jbar, *frac, rep));
            }
        }
    }
    let rows: Vec<(f64, f64, usize, f64, bool)> = cases
        .par_iter()
        .enumerate()
        .map(|(i, (jbar, frac, rep))| -> Result<(f64, f64, usize, f64, bool)> {
            let mut mc = cfg.model.clone();
            mc.jbar = *jbar;
            mc.init = InitialLaw::Constant {
                p: vec![*frac, 1.0 - *frac],
            };
            let model = build_model(&mc)?;
            let params = SimParams::new(
                cfg.sim.n_sites,
                cfg.sim.t_end,
                rng::replica_seed(cfg.sim.seed, i as u64),
            )
            .snapshots(vec![cfg.sim.t_end]);
            let out = simulate(&model, &params)?;
            let grass = out.snapshot_fractions(2)[0][0];
            Ok((*jbar, *frac, *rep, grass, out.trajectory.absorbed.is_some()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = sink.create("endstates.csv")?;
    writeln!(w, "jbar,init_grass,seed,final_grass,absorbed")?;
    for (jbar, frac, rep, grass, absorbed) in &rows {
        writeln!(w, "{jbar},{frac},{rep},{grass},{absorbed}")?;
    }
    Ok(serde_json::json!({ "cases": rows.len() }))
}
