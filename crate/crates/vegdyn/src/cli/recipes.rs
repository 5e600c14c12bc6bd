//! Named experiment presets for the toolkit's reference scenarios —
//! bistability end-states, absorption-rate sweeps, limit cycles, invasion
//! waves, front pinning — at desk scale. Each recipe expands to one or
//! more configured runs whose artifacts land in a single output directory
//! under distinct prefixes.

use crate::cli::config::{
    AnalysisSection, ExperimentConfig, GkeSection, QsdSection, SimSection, Task,
};
use crate::model::{
    Assignment, Domain, InitBlock, InitialLaw, MeasureKind, ModelConfig, ModelFamily,
    SigmoidParams,
};
use crate::qsd::TimeScale;

pub fn recipe_names() -> &'static [&'static str] {
    &[
        "fig2_bistability",
        "fig3_qsd",
        "fig4_periodic",
        "fig5_waves",
        "fig5_pinning",
    ]
}

fn gf_patch_model(jbar: f64, init_grass: f64) -> ModelConfig {
    ModelConfig {
        family: ModelFamily::Gf,
        jbar,
        beta: 0.0,
        mu: 0.1,
        nu: 0.05,
        phi: SigmoidParams::phi_default(),
        omega: SigmoidParams::omega_default(),
        domain: Domain::Patches { count: 1 },
        measure: MeasureKind::Discrete { weights: vec![1.0] },
        sigma: None,
        patch_kernels: None,
        init: InitialLaw::Constant {
            p: vec![init_grass, 1.0 - init_grass],
        },
        assignment: Assignment::Iid,
        generic: None,
    }
}

fn gstf_patch_model(jbar: f64, beta: f64, init: [f64; 4]) -> ModelConfig {
    ModelConfig {
        family: ModelFamily::Gstf,
        jbar,
        beta,
        mu: 0.1,
        nu: 0.05,
        phi: SigmoidParams::phi_default(),
        omega: SigmoidParams::omega_default(),
        domain: Domain::Patches { count: 1 },
        measure: MeasureKind::Discrete { weights: vec![1.0] },
        sigma: None,
        patch_kernels: None,
        init: InitialLaw::Constant { p: init.to_vec() },
        assignment: Assignment::Iid,
        generic: None,
    }
}

fn gf_ring_block_model(jbar: f64, sigma: f64, length: f64, block: (f64, f64)) -> ModelConfig {
    ModelConfig {
        family: ModelFamily::Gf,
        jbar,
        beta: 0.0,
        mu: 0.1,
        nu: 0.05,
        phi: SigmoidParams::phi_default(),
        omega: SigmoidParams::omega_default(),
        domain: Domain::Ring { length },
        measure: MeasureKind::Uniform,
        sigma: Some(sigma),
        patch_kernels: None,
        init: InitialLaw::Blocks {
            default: vec![1.0, 0.0],
            blocks: vec![InitBlock {
                from: block.0,
                to: block.1,
                p: vec![0.0, 1.0],
            }],
        },
        assignment: Assignment::Iid,
        generic: None,
    }
}

fn gf_trapezoid_model(jbar: f64, sigma: f64) -> ModelConfig {
    ModelConfig {
        family: ModelFamily::Gf,
        jbar,
        beta: 0.0,
        mu: 0.1,
        nu: 0.05,
        phi: SigmoidParams::phi_default(),
        omega: SigmoidParams::omega_default(),
        domain: Domain::Interval { length: 1.0 },
        measure: MeasureKind::Trapezoid { a: 0.4, b: 1.2 },
        sigma: Some(sigma),
        patch_kernels: None,
        // Forest on the sparse half, grass on the dense half.
        init: InitialLaw::Blocks {
            default: vec![1.0, 0.0],
            blocks: vec![InitBlock {
                from: 0.0,
                to: 0.5,
                p: vec![0.0, 1.0],
            }],
        },
        assignment: Assignment::Iid,
        generic: None,
    }
}

fn base(task: Task, model: ModelConfig) -> ExperimentConfig {
    ExperimentConfig {
        task,
        model,
        sim: SimSection::default(),
        gke: GkeSection::default(),
        qsd: QsdSection::default(),
        analysis: AnalysisSection::default(),
    }
}

fn times(t_end: f64, step: f64) -> Vec<f64> {
    let n = (t_end / step).round() as usize;
    (0..=n).map(|k| k as f64 * step).collect()
}

/// Expand a recipe into (artifact prefix, configuration) pairs.
pub fn recipe(name: &str) -> Option<Vec<(String, ExperimentConfig)>> {
    match name {
        // Bifurcation diagram of the two-state system plus finite-size end
        // states across initial grass covers (desk scale: N = 1000 instead
        // of 3000).
        "fig2_bistability" => {
            let mut branches = base(Task::Equilibria, gf_patch_model(1.0, 0.5));
            branches.analysis.jbar_grid =
                Some((20..=180).map(|i| i as f64 * 0.01).collect());
            let mut endstates = base(Task::Endstates, gf_patch_model(1.0, 0.5));
            endstates.sim.n_sites = 1000;
            endstates.sim.t_end = 100.0;
            endstates.sim.replicas = 10;
            endstates.analysis.jbar_grid = Some(vec![
                0.3, 0.45, 0.55, 0.6, 0.65, 0.7, 0.8, 0.9, 1.0, 1.1, 1.25,
            ]);
            Some(vec![
                ("branches_".into(), branches),
                ("endstates_".into(), endstates),
            ])
        }
        // Absorption rate and QSD of the two-state chain across system
        // sizes; rho reported on the process's event clock.
        "fig3_qsd" => {
            let mut q = base(Task::Qsd, gf_patch_model(1.0, 0.5));
            q.qsd.n_list = vec![250, 500, 1000, 2500];
            q.qsd.jbar_grid = (8..=40).map(|i| i as f64 * 0.025).collect();
            q.qsd.time_scale = TimeScale::Process;
            Some(vec![("qsd_".into(), q)])
        }
        // Four-species limit cycle: solved equations vs the N = 3000
        // particle system.
        "fig4_periodic" => {
            let mut g = base(Task::Gke, gstf_patch_model(0.25, 0.4, [0.25; 4]));
            g.gke.t_end = 300.0;
            g.gke.h = Some(0.01);
            g.gke.snapshot_times = Some(times(300.0, 0.5));
            let mut s = base(Task::Simulate, gstf_patch_model(0.25, 0.4, [0.25; 4]));
            s.sim.n_sites = 3000;
            s.sim.t_end = 300.0;
            s.sim.snapshot_times = Some(times(300.0, 0.5));
            s.sim.write_events = false;
            s.sim.write_snapshots = false;
            Some(vec![("gke_".into(), g), ("ssa_".into(), s)])
        }
        // Invasion waves on the ring of length 5 with a forest block on
        // [1, 2.5] (desk scale: N = 1000 instead of 3000).
        "fig5_waves" => {
            let mut out = Vec::new();
            for (tag, jbar) in [("j050", 0.5), ("j090", 0.9), ("j125", 1.25)] {
                let model = gf_ring_block_model(jbar, 0.05, 5.0, (1.0, 2.5));
                let mut g = base(Task::Gke, model.clone());
                g.gke.t_end = 500.0;
                g.gke.snapshot_times = Some(times(500.0, 10.0));
                out.push((format!("gke_{tag}_"), g));
                let mut s = base(Task::Simulate, model);
                s.sim.n_sites = 1000;
                s.sim.t_end = 250.0;
                s.sim.snapshot_times = Some(times(250.0, 5.0));
                s.sim.write_events = false;
                out.push((format!("ssa_{tag}_"), s));
            }
            Some(out)
        }
        // Front pinning on [0, 1] with trapezoid site density (a = 0.4,
        // b = 1.2), Jbar = 1.1, sigma = 0.02, reflecting boundary.
        "fig5_pinning" => {
            let model = gf_trapezoid_model(1.1, 0.02);
            let mut g = base(Task::Gke, model.clone());
            g.gke.t_end = 500.0;
            g.gke.snapshot_times = Some(times(500.0, 10.0));
            let mut f = base(Task::Fronts, model.clone());
            f.gke.t_end = 500.0;
            f.gke.snapshot_times = Some(times(500.0, 10.0));
            let mut s = base(Task::Simulate, model);
            s.sim.n_sites = 2000;
            s.sim.t_end = 500.0;
            s.sim.snapshot_times = Some(times(500.0, 10.0));
            s.sim.write_events = false;
            Some(vec![
                ("gke_".into(), g),
                ("fronts_".into(), f),
                ("ssa_".into(), s),
            ])
        }
        _ => None,
    }
}
