//! Cross-module invariants that tie the stochastic simulators to the
//! spectral and deterministic analyses.

use rand::Rng;
use vegdyn::analysis::{convergence_study, equilibria_2state, BranchKind, Stability, StudyOptions};
use vegdyn::gke::{make_grid, Boundary, DenseSolution, ProbabilityField};
use vegdyn::meanfield::{simulate_site, RateSchedule};
use vegdyn::model::{ModelSpec, SigmoidParams, StateId};
use vegdyn::qsd::{build_restricted_generator, dominant_eigenpair};
use vegdyn::rng;
use vegdyn::ssa::{SiteSystem, StepOutcome};

fn phi() -> SigmoidParams {
    SigmoidParams::phi_default()
}

/// Conditional survival from the quasi-stationary distribution is
/// exponential with the dominant eigenvalue's rate: absorption times of
/// the simulated chain started from the QSD, rescaled to the matrix's own
/// clock (t/N), pass a KS test against Exp(rho) at distance < 0.05.
#[test]
fn survival_law_matches_qsd_rate() {
    let n = 10usize;
    let jbar = 0.3;
    let gen = build_restricted_generator(n, jbar, &phi()).unwrap();
    let res = dominant_eigenpair(&gen, 1e-12).unwrap();
    let model = ModelSpec::gf_single_patch(jbar, phi(), 0.5).unwrap();

    let runs = 10_000;
    let mut stream = rng::stream(2024);
    let mut taus: Vec<f64> = Vec::with_capacity(runs);
    for rep in 0..runs {
        // Initial forest count sampled from the QSD (index i = i+1 forest).
        let u: f64 = stream.random();
        let mut acc = 0.0;
        let mut forest = n;
        for (i, m) in res.qsd.iter().enumerate() {
            acc += m;
            if u < acc {
                forest = i + 1;
                break;
            }
        }
        let states: Vec<StateId> = (0..n).map(|i| usize::from(i < forest)).collect();
        let mut sys =
            SiteSystem::with_states(&model, vec![0.0; n], states, rng::replica_seed(9, rep as u64))
                .unwrap();
        loop {
            match sys.step().unwrap() {
                StepOutcome::Event(_) => {}
                StepOutcome::Absorbed => break,
                StepOutcome::TimeLimit => unreachable!(),
            }
        }
        // The restricted generator carries the global 1/N factor, i.e.
        // its clock runs N times slower than the simulated chain's.
        taus.push(sys.time() * n as f64);
    }
    taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut ks: f64 = 0.0;
    for (i, tau) in taus.iter().enumerate() {
        let target = 1.0 - (-res.rho * tau).exp();
        let lo = i as f64 / runs as f64;
        let hi = (i + 1) as f64 / runs as f64;
        ks = ks.max((target - lo).abs()).max((hi - target).abs());
    }
    assert!(ks < 0.05, "KS distance {ks:.4} against Exp({:.5})", res.rho);
}

/// Past the saddle-node the QSD mode's grass fraction tracks the stable
/// nontrivial root of phi(G) = Jbar G (N = 2500).
#[test]
fn qsd_mode_concentrates_on_stable_branch() {
    for jbar in [0.7, 0.8] {
        let gen = build_restricted_generator(2500, jbar, &phi()).unwrap();
        let res = dominant_eigenpair(&gen, 1e-12).unwrap();
        let mode_grass = res.mode_grass_fraction(&gen);
        let root = equilibria_2state(jbar, &phi())
            .unwrap()
            .into_iter()
            .find(|p| p.kind == BranchKind::Nontrivial && p.stability == Stability::Stable)
            .unwrap()
            .grass;
        assert!(
            (mode_grass - root).abs() < 0.05,
            "Jbar = {jbar}: mode at {mode_grass:.4}, stable root {root:.4}"
        );
    }
}

/// Thinning exactness: with a piecewise-constant schedule the empirical
/// transition counts per interval match the analytically integrated rates
/// (chi-square over all cells, counts pooled across 20 seeds).
#[test]
fn thinning_counts_match_integrated_rates() {
    // Hand-made two-level law for the two-state model: P_F = 0.2 for
    // t in [0, 10), then 0.7 for t in [10, 20].
    let jbar = 1.0;
    let model = ModelSpec::gf_single_patch(jbar, phi(), 0.8).unwrap();
    let grid = make_grid(model.measure(), 1, Boundary::None).unwrap();
    let h = 0.1;
    let steps = 200usize;
    let fields: Vec<ProbabilityField> = (0..=steps)
        .map(|s| {
            let p_f = if (s as f64) * h < 10.0 { 0.2 } else { 0.7 };
            ProbabilityField::constant(&[1.0 - p_f, p_f], 1).unwrap()
        })
        .collect();
    let schedule = RateSchedule::from_solution(
        &model,
        &grid,
        DenseSolution {
            h,
            t_end: steps as f64 * h,
            fields,
        },
    )
    .unwrap();

    // Rates per interval (grass -> forest at Jbar P_F, forest -> grass at
    // phi(P_G)); the transition ramp occupies one step and is excluded by
    // integrating piecewise away from it.
    let lam = |t: f64| {
        let p_f = if t < 10.0 { 0.2 } else { 0.7 };
        (jbar * p_f, phi().eval(1.0 - p_f))
    };
    // Expected counts by integrating the two-state master equation
    // piecewise (closed-form relaxation within each constant piece).
    let mut expected = [[0.0f64; 2]; 2]; // [interval][transition g->f, f->g]
    let mut p_g = 1.0f64; // all replicas start in grass
    let dt = 1e-4;
    let mut t = 0.0;
    while t < 20.0 - dt / 2.0 {
        let (l_gf, l_fg) = lam(t + dt / 2.0);
        let interval = usize::from(t >= 10.0);
        expected[interval][0] += l_gf * p_g * dt;
        expected[interval][1] += l_fg * (1.0 - p_g) * dt;
        p_g += dt * (l_fg * (1.0 - p_g) - l_gf * p_g);
        t += dt;
    }

    let replicas_per_seed = 500;
    let seeds = 20;
    let mut observed = [[0.0f64; 2]; 2];
    for seed in 0..seeds {
        for rep in 0..replicas_per_seed {
            let traj = simulate_site(
                &schedule,
                0.0,
                0,
                20.0,
                rng::replica_seed(seed, rep as u64),
            )
            .unwrap();
            for (t, from, _to) in &traj.events {
                let interval = usize::from(*t >= 10.0);
                observed[interval][usize::from(*from != 0)] += 1.0;
            }
        }
    }
    let total_reps = (replicas_per_seed * seeds as usize) as f64;
    let mut chi2 = 0.0;
    for i in 0..2 {
        for k in 0..2 {
            let e = expected[i][k] * total_reps;
            chi2 += (observed[i][k] - e) * (observed[i][k] - e) / e;
        }
    }
    // 0.999 quantile of chi-square with 4 degrees of freedom.
    assert!(
        chi2 < 18.47,
        "chi-square {chi2:.2} (observed {observed:?}, expected-per-rep {expected:?})"
    );
}

/// The convergence-study error is nonincreasing in N up to Monte Carlo
/// noise (paired confidence bands).
#[test]
fn convergence_error_nonincreasing_in_n() {
    let model = ModelSpec::gf_single_patch(1.1, phi(), 0.3).unwrap();
    let opts = StudyOptions {
        gke_h: Some(1e-3),
        ..StudyOptions::default()
    };
    let study = convergence_study(&model, &[125, 500, 2000], 12, 10.0, 99, &opts).unwrap();
    let se: Vec<f64> = study
        .per_replica
        .iter()
        .zip(&study.errors)
        .map(|(row, mean)| {
            let var = row.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
                / (row.len().saturating_sub(1).max(1)) as f64;
            (var / row.len() as f64).sqrt()
        })
        .collect();
    for i in 1..study.errors.len() {
        assert!(
            study.errors[i] <= study.errors[i - 1] + 2.0 * (se[i] + se[i - 1]),
            "error rose from {:.4} to {:.4} beyond noise",
            study.errors[i - 1],
            study.errors[i]
        );
    }
}

/// Replica count changes the confidence interval, not the slope (estimator
/// consistency).
#[test]
fn convergence_slope_consistent_across_replica_counts() {
    let model = ModelSpec::gf_single_patch(1.1, phi(), 0.3).unwrap();
    let opts = StudyOptions {
        gke_h: Some(1e-3),
        ..StudyOptions::default()
    };
    let a = convergence_study(&model, &[125, 1000, 8000], 4, 10.0, 7, &opts).unwrap();
    let b = convergence_study(&model, &[125, 1000, 8000], 20, 10.0, 7, &opts).unwrap();
    let (sa, ca) = a.slope.unwrap();
    let (sb, cb) = b.slope.unwrap();
    let gap = (sa - sb).abs();
    assert!(
        gap < ca + cb + 0.5,
        "slopes {sa:.2} and {sb:.2} with widths {ca:.2}, {cb:.2}"
    );
}

/// Invasion-wave speeds have the expected signs when tracking the falling
/// edge of the forest block (forest to the left of the front): forest
/// invades at Jbar = 1.25 (positive speed), grass invades at Jbar = 0.5
/// (negative speed).
#[test]
fn wave_speed_signs_follow_invasion_direction() {
    use vegdyn::analysis::{front_position, wave_speed};
    use vegdyn::gke::{integrate, GkeSolver};
    use vegdyn::model::InitBlock;
    use vegdyn::model::InitialLaw;

    // Below the saddle-node the block decays in place rather than
    // retreating indefinitely, so its front is only trackable early.
    let windows: [Vec<f64>; 2] = [
        (0..=10).map(|k| 10.0 + k as f64 * 5.0).collect(),
        (1..=6).map(|k| k as f64 * 2.0).collect(),
    ];
    let mut speeds = Vec::new();
    for (jbar, times) in [1.25, 0.5].into_iter().zip(&windows) {
        let model = ModelSpec::gf_ring(
            jbar,
            0.05,
            5.0,
            phi(),
            InitialLaw::Blocks {
                default: vec![1.0, 0.0],
                blocks: vec![InitBlock {
                    from: 1.0,
                    to: 2.5,
                    p: vec![0.0, 1.0],
                }],
            },
        )
        .unwrap();
        let grid = make_grid(model.measure(), 200, Boundary::Periodic).unwrap();
        let solver = GkeSolver::new(&model, &grid).unwrap();
        let init = ProbabilityField::from_initial_law(&model, &grid).unwrap();
        let series = integrate(&solver, &init, 0.05, 60.0, times).unwrap();
        // Track the falling edge (right side of the block): restrict the
        // profile to x >= 1.75 where it is the leftmost crossing.
        let cut = grid.nodes().iter().position(|x| *x >= 1.75).unwrap();
        let fronts: Vec<Option<f64>> = series
            .fields
            .iter()
            .map(|f| {
                front_position(
                    &grid.nodes()[cut..],
                    &f.state_values(1)[cut..],
                    0.5,
                )
                .unwrap()
            })
            .collect();
        speeds.push(wave_speed(times, &fronts).unwrap().unwrap());
    }
    assert!(speeds[0] > 1e-3, "forest should invade at 1.25: {speeds:?}");
    assert!(speeds[1] < -1e-3, "grass should invade at 0.5: {speeds:?}");
}
