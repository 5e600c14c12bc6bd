//! Python bindings: the main model types and operations of the vegdyn
//! toolkit behind a thin `vegdyn_py` module.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use vegdyn::analysis;
use vegdyn::cli;
use vegdyn::error::Error;
use vegdyn::gke::{self, Boundary, GkeSolver, ProbabilityField};
use vegdyn::meanfield::{ensemble_occupancy, RateSchedule};
use vegdyn::model::{build_model, Domain, ModelConfig, ModelSpec, SigmoidParams};
use vegdyn::qsd::{build_restricted_generator, dominant_eigenpair, TimeScale};
use vegdyn::ssa::{simulate, SimParams};

/// (times, positions, fields[time][node][state]).
type GkeSolution = (Vec<f64>, Vec<f64>, Vec<Vec<Vec<f64>>>);
/// (times, freq[time][state], stderr[time][state]).
type Ensemble = (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>);

fn pyerr(e: Error) -> PyErr {
    match cli::exit_code(&e) {
        3 => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Logistic rate function of local cover.
#[pyclass(name = "Sigmoid", from_py_object)]
#[derive(Clone)]
struct PySigmoid {
    inner: SigmoidParams,
}

#[pymethods]
impl PySigmoid {
    #[new]
    fn new(lo: f64, hi: f64, center: f64, slope: f64) -> PyResult<Self> {
        Ok(Self {
            inner: SigmoidParams::new(lo, hi, center, slope).map_err(pyerr)?,
        })
    }

    /// Fire-mortality parameters used throughout the studies.
    #[staticmethod]
    fn phi_default() -> Self {
        Self {
            inner: SigmoidParams::phi_default(),
        }
    }

    /// Sapling-maturation parameters (decreasing).
    #[staticmethod]
    fn omega_default() -> Self {
        Self {
            inner: SigmoidParams::omega_default(),
        }
    }

    fn eval(&self, x: f64) -> PyResult<f64> {
        vegdyn::model::eval_sigmoid(&self.inner, x).map_err(pyerr)
    }

    fn __repr__(&self) -> String {
        format!(
            "Sigmoid(lo={}, hi={}, center={}, slope={})",
            self.inner.lo, self.inner.hi, self.inner.center, self.inner.slope
        )
    }
}

/// A validated model specification.
#[pyclass(name = "Model")]
struct PyModel {
    inner: ModelSpec,
}

#[pymethods]
impl PyModel {
    /// Build from the same JSON document the CLI's `model` section uses.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let cfg: ModelConfig = serde_json::from_str(text)
            .map_err(|e| PyValueError::new_err(format!("model config: {e}")))?;
        Ok(Self {
            inner: build_model(&cfg).map_err(pyerr)?,
        })
    }

    /// Two-state grass/forest model on a single patch.
    #[staticmethod]
    #[pyo3(signature = (jbar, init_grass, phi=None))]
    fn gf_patch(jbar: f64, init_grass: f64, phi: Option<PySigmoid>) -> PyResult<Self> {
        let phi = phi.map_or_else(SigmoidParams::phi_default, |p| p.inner);
        Ok(Self {
            inner: ModelSpec::gf_single_patch(jbar, phi, init_grass).map_err(pyerr)?,
        })
    }

    /// Four-species model on a single patch with the table parameters.
    #[staticmethod]
    fn gstf_patch(jbar: f64, beta: f64, init: [f64; 4]) -> PyResult<Self> {
        Ok(Self {
            inner: ModelSpec::gstf_single_patch(jbar, beta, &Default::default(), init)
                .map_err(pyerr)?,
        })
    }

    fn labels(&self) -> Vec<String> {
        self.inner.states().labels().to_vec()
    }

    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(states={:?}, transitions={})",
            self.inner.states().labels(),
            self.inner.transitions().len()
        )
    }
}

/// One stochastic run: events, snapshots, occupancy fractions.
#[pyclass(name = "SimResult")]
struct PySimResult {
    #[pyo3(get)]
    times: Vec<f64>,
    #[pyo3(get)]
    occupancy: Vec<Vec<f64>>,
    #[pyo3(get)]
    n_events: usize,
    #[pyo3(get)]
    absorbed_at: Option<f64>,
    #[pyo3(get)]
    final_states: Vec<usize>,
    #[pyo3(get)]
    positions: Vec<f64>,
}

/// Exact event-driven simulation of the finite-size system.
#[pyfunction]
#[pyo3(signature = (model, n_sites, t_end, seed, snapshot_times=None))]
fn simulate_ssa(
    model: &PyModel,
    n_sites: usize,
    t_end: f64,
    seed: u64,
    snapshot_times: Option<Vec<f64>>,
) -> PyResult<PySimResult> {
    let times = snapshot_times.unwrap_or_else(|| vec![0.0, t_end]);
    let params = SimParams::new(n_sites, t_end, seed).snapshots(times.clone());
    let out = simulate(&model.inner, &params).map_err(pyerr)?;
    Ok(PySimResult {
        times,
        occupancy: out.snapshot_fractions(model.inner.n_states()),
        n_events: out.trajectory.events.len(),
        absorbed_at: out.trajectory.absorbed,
        final_states: out.trajectory.final_states(),
        positions: out.trajectory.positions.clone(),
    })
}

/// Deterministic solution of the generalized Kolmogorov equations.
#[pyfunction]
#[pyo3(signature = (model, t_end, snapshot_times, nodes=200, h=None))]
fn solve_gke(
    model: &PyModel,
    t_end: f64,
    snapshot_times: Vec<f64>,
    nodes: usize,
    h: Option<f64>,
) -> PyResult<GkeSolution> {
    let m = &model.inner;
    let (boundary, n_nodes, h_default) = match m.domain() {
        Domain::Patches { count } => (Boundary::None, count, 0.01),
        Domain::Ring { .. } => (Boundary::Periodic, nodes, 0.05),
        Domain::Interval { .. } => (Boundary::Reflecting, nodes, 0.05),
    };
    let grid = gke::make_grid(m.measure(), n_nodes, boundary).map_err(pyerr)?;
    let solver = GkeSolver::new(m, &grid).map_err(pyerr)?;
    let init = ProbabilityField::from_initial_law(m, &grid).map_err(pyerr)?;
    let series = gke::integrate(
        &solver,
        &init,
        h.unwrap_or(h_default),
        t_end,
        &snapshot_times,
    )
    .map_err(pyerr)?;
    let fields = series
        .fields
        .iter()
        .map(|f| (0..f.n_nodes()).map(|i| f.node(i).to_vec()).collect())
        .collect();
    Ok((series.times, grid.nodes().to_vec(), fields))
}

/// Empirical occupancy of the limiting single-site process against its
/// own driving solution: returns (times, freq, stderr).
#[pyfunction]
#[pyo3(signature = (model, n_replicas, t_end, times, seed, h=None, location=0.0))]
#[allow(clippy::too_many_arguments)]
fn meanfield_ensemble(
    model: &PyModel,
    n_replicas: usize,
    t_end: f64,
    times: Vec<f64>,
    seed: u64,
    h: Option<f64>,
    location: f64,
) -> PyResult<Ensemble> {
    let m = &model.inner;
    let (boundary, n_nodes, h_default) = match m.domain() {
        Domain::Patches { count } => (Boundary::None, count, 0.01),
        _ => (Boundary::Periodic, 200, 0.05),
    };
    let grid = gke::make_grid(m.measure(), n_nodes, boundary).map_err(pyerr)?;
    let init = ProbabilityField::from_initial_law(m, &grid).map_err(pyerr)?;
    let schedule =
        RateSchedule::build(m, &grid, &init, h.unwrap_or(h_default), t_end).map_err(pyerr)?;
    let ens = ensemble_occupancy(&schedule, location, n_replicas, &times, seed).map_err(pyerr)?;
    Ok((ens.times, ens.freq, ens.stderr))
}

/// Dominant eigenpair of the restricted two-state generator:
/// (rho, qsd, residual). `process_scale` reports rho on the simulated
/// chain's clock (N times the matrix's own rate).
#[pyfunction]
#[pyo3(signature = (n, jbar, phi=None, process_scale=false))]
fn qsd(
    n: usize,
    jbar: f64,
    phi: Option<PySigmoid>,
    process_scale: bool,
) -> PyResult<(f64, Vec<f64>, f64)> {
    let phi = phi.map_or_else(SigmoidParams::phi_default, |p| p.inner);
    let gen = build_restricted_generator(n, jbar, &phi).map_err(pyerr)?;
    let res = dominant_eigenpair(&gen, 1e-12).map_err(pyerr)?;
    let rho = if process_scale {
        res.rho * n as f64
    } else {
        res.rho
    };
    Ok((rho, res.qsd, res.residual))
}

/// Absorption-rate sweep: rows of (N, jbar, rho).
#[pyfunction]
#[pyo3(signature = (n_list, jbar_grid, process_scale=false))]
fn qsd_sweep(
    n_list: Vec<usize>,
    jbar_grid: Vec<f64>,
    process_scale: bool,
) -> PyResult<Vec<(usize, f64, f64)>> {
    let scale = if process_scale {
        TimeScale::Process
    } else {
        TimeScale::Matrix
    };
    let sweep = vegdyn::qsd::qsd_sweep(&n_list, &jbar_grid, &SigmoidParams::phi_default(), scale)
        .map_err(pyerr)?;
    Ok(sweep.rows.iter().map(|r| (r.n, r.jbar, r.rho)).collect())
}

/// Equilibria of the two-state system at one Jbar:
/// rows of (grass, stable, trivial).
#[pyfunction]
#[pyo3(signature = (jbar, phi=None))]
fn equilibria(jbar: f64, phi: Option<PySigmoid>) -> PyResult<Vec<(f64, bool, bool)>> {
    let phi = phi.map_or_else(SigmoidParams::phi_default, |p| p.inner);
    Ok(analysis::equilibria_2state(jbar, &phi)
        .map_err(pyerr)?
        .into_iter()
        .map(|p| {
            (
                p.grass,
                p.stability == analysis::Stability::Stable,
                p.kind == analysis::BranchKind::Trivial,
            )
        })
        .collect())
}

/// Saddle-node and transcritical locations over a Jbar grid.
#[pyfunction]
fn bifurcations(jbar_grid: Vec<f64>) -> PyResult<(Vec<f64>, Option<f64>)> {
    let d = analysis::bifurcation_sweep(&jbar_grid, &SigmoidParams::phi_default())
        .map_err(pyerr)?;
    Ok((d.saddle_nodes, d.transcritical))
}

/// Mean upward-crossing period of a uniformly sampled series, or None.
#[pyfunction]
fn estimate_period(series: Vec<f64>, dt: f64) -> Option<(f64, f64)> {
    analysis::estimate_period(&series, dt).map(|e| (e.period, e.relative_spread))
}

/// Leftmost threshold crossing of a 1D profile, or None.
#[pyfunction]
#[pyo3(signature = (xs, values, threshold=0.5))]
fn front_position(xs: Vec<f64>, values: Vec<f64>, threshold: f64) -> PyResult<Option<f64>> {
    analysis::front_position(&xs, &values, threshold).map_err(pyerr)
}

/// Run a CLI task or recipe, writing CSV artifacts and manifest.json into
/// `out_dir`. `config_json` is required for tasks and forbidden for
/// recipes. Returns the manifest path.
#[pyfunction]
#[pyo3(signature = (name, out_dir, config_json=None, overrides=None, seed=None))]
fn run_experiment(
    name: &str,
    out_dir: &str,
    config_json: Option<&str>,
    overrides: Option<Vec<String>>,
    seed: Option<u64>,
) -> PyResult<String> {
    let out = std::path::PathBuf::from(out_dir);
    let config_path = match config_json {
        Some(text) => {
            std::fs::create_dir_all(&out).map_err(|e| pyerr(Error::Io(e)))?;
            let p = out.join("config.json");
            std::fs::write(&p, text).map_err(|e| pyerr(Error::Io(e)))?;
            Some(p)
        }
        None => None,
    };
    let report = cli::run(&cli::Invocation {
        name: name.to_string(),
        config_path,
        out_dir: out,
        seed,
        overrides: overrides.unwrap_or_default(),
    })
    .map_err(pyerr)?;
    Ok(report.manifest_path.display().to_string())
}

#[pymodule]
fn vegdyn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySigmoid>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PySimResult>()?;
    m.add_function(wrap_pyfunction!(simulate_ssa, m)?)?;
    m.add_function(wrap_pyfunction!(solve_gke, m)?)?;
    m.add_function(wrap_pyfunction!(meanfield_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(qsd, m)?)?;
    m.add_function(wrap_pyfunction!(qsd_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(equilibria, m)?)?;
    m.add_function(wrap_pyfunction!(bifurcations, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_period, m)?)?;
    m.add_function(wrap_pyfunction!(front_position, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
