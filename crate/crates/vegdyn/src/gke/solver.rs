//! Right-hand side assembly and the explicit Euler integrator.

use crate::error::{Error, Result};
use crate::gke::{Grid, ProbabilityField};
use crate::model::{Kernel, ModelSpec, RateFn, StateId};

/// Negative values this small are clamped to zero (with renormalization of
/// the node's simplex); anything below aborts with step-size advice.
const CLIP_TOL: f64 = 1e-10;
const ABORT_TOL: f64 = 1e-8;

/// One unique (kernel shape, dependency state) convolution.
struct ConvPair {
    matrix: Vec<f64>,
    psi: StateId,
}

struct TransEval {
    from: StateId,
    to: StateId,
    rate: RateFn,
    /// (convolution pair index, kernel amplitude); `None` for constant rates.
    conv: Option<(usize, f64)>,
}

/// Precomputed discretization of a model on a grid: one dense kernel matrix
/// per distinct kernel shape, shared across transitions.
pub struct GkeSolver {
    grid: Grid,
    n_states: usize,
    pairs: Vec<ConvPair>,
    trans: Vec<TransEval>,
    /// Sup over states of the total outflow rate; governs the Euler
    /// positivity guard h * outflow < 1.
    max_outflow: f64,
}

impl GkeSolver {
    pub fn new(model: &ModelSpec, grid: &Grid) -> Result<Self> {
        let (shapes, refs) = model.kernel_shapes();
        let mut shape_matrices: Vec<Option<Vec<f64>>> = vec![None; shapes.len()];
        let mut pairs: Vec<ConvPair> = Vec::new();
        let mut pair_key: Vec<(usize, StateId)> = Vec::new();

        let mut trans = Vec::with_capacity(model.transitions().len());
        for (t, kref) in model.transitions().iter().zip(&refs) {
            let conv = match (kref, t.depends_on) {
                (Some((shape_idx, amp)), Some(psi)) => {
                    let key = (*shape_idx, psi);
                    let pair_idx = match pair_key.iter().position(|k| *k == key) {
                        Some(i) => i,
                        None => {
                            if shape_matrices[*shape_idx].is_none() {
                                let unit = Kernel {
                                    kind: shapes[*shape_idx].clone(),
                                    amplitude: 1.0,
                                };
                                shape_matrices[*shape_idx] = Some(grid.kernel_matrix(&unit)?);
                            }
                            pairs.push(ConvPair {
                                matrix: shape_matrices[*shape_idx].clone().unwrap(),
                                psi,
                            });
                            pair_key.push(key);
                            pairs.len() - 1
                        }
                    };
                    Some((pair_idx, *amp))
                }
                _ => None,
            };
            trans.push(TransEval {
                from: t.from,
                to: t.to,
                rate: t.rate.clone(),
                conv,
            });
        }

        // Rate bounds for the positivity guard use the discretized field
        // bound (largest kernel row integral times amplitude), which is
        // far tighter than the pointwise kernel sup relevant to empirical
        // fields.
        let n = grid.len();
        let row_sup: Vec<f64> = pairs
            .iter()
            .map(|p| {
                (0..n)
                    .map(|i| p.matrix[i * n..(i + 1) * n].iter().sum::<f64>())
                    .fold(0.0, f64::max)
            })
            .collect();
        let max_outflow = (0..model.n_states())
            .map(|x| {
                model
                    .transitions_from(x)
                    .iter()
                    .map(|i| {
                        let t = &trans[*i];
                        let field_sup = match t.conv {
                            None => 0.0,
                            Some((pair, amp)) => amp * row_sup[pair],
                        };
                        t.rate.sup_on(field_sup)
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);

        Ok(Self {
            grid: grid.clone(),
            n_states: model.n_states(),
            pairs,
            trans,
            max_outflow,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    fn conv_into(&self, field: &ProbabilityField, out: &mut [Vec<f64>]) {
        let n = self.grid.len();
        for (p, pair) in self.pairs.iter().enumerate() {
            let psi_vals = field.state_values(pair.psi);
            for i in 0..n {
                let row = &pair.matrix[i * n..(i + 1) * n];
                out[p][i] = row.iter().zip(&psi_vals).map(|(a, b)| a * b).sum();
            }
        }
    }

    /// Gain/loss form of the generalized Kolmogorov right-hand side. Each
    /// transition's flux is subtracted from its source and added to its
    /// target, so the per-node component sum cancels term by term.
    pub fn rhs_into(&self, field: &ProbabilityField, conv: &mut [Vec<f64>], out: &mut [f64]) {
        let n = self.grid.len();
        let k = self.n_states;
        self.conv_into(field, conv);
        out.fill(0.0);
        for t in &self.trans {
            match t.conv {
                None => {
                    let rate = t.rate.eval(0.0);
                    for i in 0..n {
                        let flux = rate * field.node(i)[t.from];
                        out[i * k + t.from] -= flux;
                        out[i * k + t.to] += flux;
                    }
                }
                Some((pair, amp)) => {
                    let u = &conv[pair];
                    for i in 0..n {
                        let flux = t.rate.eval(amp * u[i]) * field.node(i)[t.from];
                        out[i * k + t.from] -= flux;
                        out[i * k + t.to] += flux;
                    }
                }
            }
        }
    }

    fn conv_scratch(&self) -> Vec<Vec<f64>> {
        vec![vec![0.0; self.grid.len()]; self.pairs.len()]
    }

    /// Per-transition field values `int W P_psi dq` at one node; used by the
    /// mean-field rate schedule.
    pub fn transition_fields_at(&self, field: &ProbabilityField, node: usize) -> Vec<f64> {
        let n = self.grid.len();
        self.trans
            .iter()
            .map(|t| match t.conv {
                None => 0.0,
                Some((pair, amp)) => {
                    let row = &self.pairs[pair].matrix[node * n..(node + 1) * n];
                    let psi = self.pairs[pair].psi;
                    amp * (0..n).map(|j| row[j] * field.node(j)[psi]).sum::<f64>()
                }
            })
            .collect()
    }
}

/// Per-node time derivative of the probability field.
pub fn rhs(solver: &GkeSolver, field: &ProbabilityField) -> Result<Vec<f64>> {
    if field.n_nodes() != solver.grid.len() || field.n_states() != solver.n_states {
        return Err(Error::LengthMismatch {
            expected: solver.grid.len() * solver.n_states,
            got: field.n_nodes() * field.n_states(),
        });
    }
    let mut conv = solver.conv_scratch();
    let mut out = vec![0.0; field.data().len()];
    solver.rhs_into(field, &mut conv, &mut out);
    Ok(out)
}

/// Solution snapshots at requested times.
#[derive(Debug, Clone)]
pub struct FieldSeries {
    pub times: Vec<f64>,
    pub fields: Vec<ProbabilityField>,
}

impl FieldSeries {
    /// Snapshot at (or nearest below) time `t`.
    pub fn at(&self, t: f64) -> Option<&ProbabilityField> {
        let mut best: Option<(f64, usize)> = None;
        for (i, ti) in self.times.iter().enumerate() {
            let d = (ti - t).abs();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        best.map(|(_, i)| &self.fields[i])
    }

    /// CSV export: `t,node,pos,P_<state1>,...,P_<stateK>`.
    pub fn write_csv<W: std::io::Write>(
        &self,
        grid: &Grid,
        state_labels: &[String],
        mut w: W,
    ) -> Result<()> {
        write!(w, "t,node,pos")?;
        for s in state_labels {
            write!(w, ",P_{s}")?;
        }
        writeln!(w)?;
        for (t, f) in self.times.iter().zip(&self.fields) {
            for (i, pos) in grid.nodes().iter().enumerate() {
                write!(w, "{t},{i},{pos}")?;
                for v in f.node(i) {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// Every Euler iterate, kept for rate-schedule interpolation.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    pub h: f64,
    pub t_end: f64,
    pub fields: Vec<ProbabilityField>,
}

impl DenseSolution {
    pub fn n_steps(&self) -> usize {
        self.fields.len() - 1
    }

    /// Linear interpolation weights for time `t`: (left index, fraction).
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if t < -1e-12 || t > self.t_end + 1e-9 {
            return Err(Error::TimeOutOfRange {
                t,
                t_max: self.t_end,
            });
        }
        let s = (t.max(0.0) / self.h).min((self.fields.len() - 1) as f64);
        let idx = (s.floor() as usize).min(self.fields.len() - 2);
        Ok((idx, s - idx as f64))
    }
}

fn steps_for(t_end: f64, h: f64) -> usize {
    ((t_end / h) - 1e-9).ceil().max(0.0) as usize
}

/// Forward-Euler integration with snapshots at the steps nearest the
/// requested times. `on_snapshot` fires as each snapshot is taken, letting
/// callers stream partial artifacts.
pub fn integrate_with(
    solver: &GkeSolver,
    init: &ProbabilityField,
    h: f64,
    t_end: f64,
    snapshot_times: &[f64],
    mut on_snapshot: impl FnMut(f64, &ProbabilityField),
) -> Result<FieldSeries> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("step size must be > 0, got {h}")));
    }
    if h * solver.max_outflow >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "positivity guard: h * max outflow = {:.3} must be < 1; reduce h below {:.4}",
            h * solver.max_outflow,
            1.0 / solver.max_outflow
        )));
    }
    init.check_simplex(1e-9)?;

    let n_steps = steps_for(t_end, h);
    let mut snaps: Vec<(usize, f64)> = snapshot_times
        .iter()
        .map(|&t| (((t / h).round() as usize).min(n_steps), t))
        .collect();
    snaps.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.partial_cmp(&b.1).unwrap()));
    let mut next_snap = 0;

    let mut field = init.clone();
    let mut conv = solver.conv_scratch();
    let mut deriv = vec![0.0; field.data().len()];
    let mut out = FieldSeries {
        times: Vec::new(),
        fields: Vec::new(),
    };

    for step in 0..=n_steps {
        while next_snap < snaps.len() && snaps[next_snap].0 == step {
            out.times.push(snaps[next_snap].1);
            out.fields.push(field.clone());
            on_snapshot(snaps[next_snap].1, &field);
            next_snap += 1;
        }
        if step == n_steps {
            break;
        }
        solver.rhs_into(&field, &mut conv, &mut deriv);
        let t = step as f64 * h;
        euler_update(&mut field, &deriv, h, t)?;
    }
    Ok(out)
}

/// Forward-Euler integration; see [`integrate_with`].
pub fn integrate(
    solver: &GkeSolver,
    init: &ProbabilityField,
    h: f64,
    t_end: f64,
    snapshot_times: &[f64],
) -> Result<FieldSeries> {
    integrate_with(solver, init, h, t_end, snapshot_times, |_, _| {})
}

/// Forward Euler keeping every iterate.
pub fn integrate_dense(
    solver: &GkeSolver,
    init: &ProbabilityField,
    h: f64,
    t_end: f64,
) -> Result<DenseSolution> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("step size must be > 0, got {h}")));
    }
    if h * solver.max_outflow >= 1.0 {
        return Err(Error::InvalidInput(format!(
            "positivity guard: h * max outflow = {:.3} must be < 1",
            h * solver.max_outflow
        )));
    }
    init.check_simplex(1e-9)?;
    let n_steps = steps_for(t_end, h);
    let mut fields = Vec::with_capacity(n_steps + 1);
    let mut field = init.clone();
    let mut conv = solver.conv_scratch();
    let mut deriv = vec![0.0; field.data().len()];
    fields.push(field.clone());
    for step in 0..n_steps {
        solver.rhs_into(&field, &mut conv, &mut deriv);
        euler_update(&mut field, &deriv, h, step as f64 * h)?;
        fields.push(field.clone());
    }
    Ok(DenseSolution {
        h,
        t_end: n_steps as f64 * h,
        fields,
    })
}

fn euler_update(field: &mut ProbabilityField, deriv: &[f64], h: f64, t: f64) -> Result<()> {
    let k = field.n_states();
    let n = field.n_nodes();
    let data = field.data_mut();
    for (v, d) in data.iter_mut().zip(deriv) {
        *v += h * d;
    }
    for i in 0..n {
        let node = &mut data[i * k..(i + 1) * k];
        let mut dirty = false;
        for v in node.iter_mut() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("Euler iterate at node {i}, t = {t}"),
                });
            }
            if *v < 0.0 {
                if *v < -ABORT_TOL {
                    return Err(Error::PositivityViolation {
                        node: i,
                        value: *v,
                        t,
                    });
                }
                if *v >= -CLIP_TOL {
                    *v = 0.0;
                    dirty = true;
                } else {
                    // Between the clip and abort tolerances: clamp but keep
                    // the renormalization, same as the clip branch.
                    *v = 0.0;
                    dirty = true;
                }
            }
        }
        if dirty {
            let s: f64 = node.iter().sum();
            if s > 0.0 {
                for v in node.iter_mut() {
                    *v /= s;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gke::{make_grid, Boundary};
    use crate::model::{GstfParams, ModelSpec, SigmoidParams};

    fn gf_patch(jbar: f64, init_grass: f64) -> (ModelSpec, Grid) {
        let m = ModelSpec::gf_single_patch(jbar, SigmoidParams::phi_default(), init_grass).unwrap();
        let g = make_grid(m.measure(), 1, Boundary::None).unwrap();
        (m, g)
    }

    #[test]
    fn gf_single_patch_rhs_formula() {
        // dP_G/dt = (1-p) phi(p) - Jbar p (1-p)
        let (m, g) = gf_patch(1.0, 0.7);
        let solver = GkeSolver::new(&m, &g).unwrap();
        let phi = SigmoidParams::phi_default();
        for p in [0.0, 0.2, 0.5, 0.7, 1.0] {
            let f = ProbabilityField::constant(&[p, 1.0 - p], 1).unwrap();
            let d = rhs(&solver, &f).unwrap();
            let expected = (1.0 - p) * phi.eval(p) - 1.0 * p * (1.0 - p);
            assert!(
                (d[0] - expected).abs() < 1e-14,
                "p = {p}: {} vs {expected}",
                d[0]
            );
            assert!((d[0] + d[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn all_grass_is_fixed_point() {
        let (m, g) = gf_patch(1.3, 1.0);
        let solver = GkeSolver::new(&m, &g).unwrap();
        let f = ProbabilityField::constant(&[1.0, 0.0], 1).unwrap();
        let d = rhs(&solver, &f).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-15), "{d:?}");
    }

    #[test]
    fn gstf_rhs_matches_four_species_ode() {
        // Oracle: the four-species single-patch system written out by hand.
        let params = GstfParams::default();
        let (jbar, beta) = (0.25, 0.4);
        let m = ModelSpec::gstf_single_patch(jbar, beta, &params, [0.25; 4]).unwrap();
        let grid = make_grid(m.measure(), 1, Boundary::None).unwrap();
        let solver = GkeSolver::new(&m, &grid).unwrap();

        let state = [0.4, 0.2, 0.3, 0.1]; // G, S, T, F
        let f = ProbabilityField::constant(&state, 1).unwrap();
        let d = rhs(&solver, &f).unwrap();

        let (g, s, t, fo) = (state[0], state[1], state[2], state[3]);
        let phi = params.phi.eval(g);
        let om = params.omega.eval(g);
        let expected = [
            params.mu * s + params.nu * t + phi * fo - jbar * g * fo - beta * g * t,
            beta * g * t - jbar * s * fo - om * s - params.mu * s,
            om * s - params.nu * t - jbar * t * fo,
            jbar * (g + s + t) * fo - phi * fo,
        ];
        for (i, e) in expected.iter().enumerate() {
            assert!((d[i] - e).abs() < 1e-14, "component {i}: {} vs {e}", d[i]);
        }
        assert!(d.iter().sum::<f64>().abs() < 1e-15);
        // Absorbing fixed point.
        let f1 = ProbabilityField::constant(&[1.0, 0.0, 0.0, 0.0], 1).unwrap();
        let d1 = rhs(&solver, &f1).unwrap();
        assert!(d1.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn rhs_components_cancel_on_ring() {
        let m = ModelSpec::gf_ring(
            1.1,
            0.05,
            5.0,
            SigmoidParams::phi_default(),
            crate::model::InitialLaw::Constant { p: vec![0.5, 0.5] },
        )
        .unwrap();
        let g = make_grid(m.measure(), 64, Boundary::Periodic).unwrap();
        let solver = GkeSolver::new(&m, &g).unwrap();
        // A rough non-constant field.
        let mut data = Vec::new();
        for i in 0..64 {
            let p = 0.5 + 0.45 * (i as f64 / 10.0).sin();
            data.extend_from_slice(&[p, 1.0 - p]);
        }
        let f = ProbabilityField::new(64, 2, data).unwrap();
        let d = rhs(&solver, &f).unwrap();
        for i in 0..64 {
            let s = d[2 * i] + d[2 * i + 1];
            assert!(s.abs() < 1e-15, "node {i}: {s}");
        }
    }

    #[test]
    fn integrate_zero_time_returns_init() {
        let (m, g) = gf_patch(1.1, 0.2);
        let solver = GkeSolver::new(&m, &g).unwrap();
        let init = ProbabilityField::constant(&[0.2, 0.8], 1).unwrap();
        let out = integrate(&solver, &init, 0.01, 0.0, &[0.0]).unwrap();
        assert_eq!(out.fields.len(), 1);
        assert_eq!(out.fields[0], init);
    }

    #[test]
    fn converges_to_forest_dominated_equilibrium() {
        // Jbar = 1.1 from P_G = 0.2: the grass fraction settles on the
        // smallest root of phi(G) = Jbar G (below the unstable root).
        let (m, g) = gf_patch(1.1, 0.2);
        let solver = GkeSolver::new(&m, &g).unwrap();
        let init = ProbabilityField::constant(&[0.2, 0.8], 1).unwrap();
        let out = integrate(&solver, &init, 0.01, 200.0, &[200.0]).unwrap();
        let p_g = out.fields[0].node(0)[0];
        let phi = SigmoidParams::phi_default();
        assert!((phi.eval(p_g) - 1.1 * p_g).abs() < 1e-6, "residual at {p_g}");
        assert!(p_g < 0.2, "expected the forest-dominated root, got {p_g}");
    }

    #[test]
    fn euler_first_order_convergence() {
        let (m, g) = gf_patch(1.1, 0.3);
        let solver = GkeSolver::new(&m, &g).unwrap();
        let init = ProbabilityField::constant(&[0.3, 0.7], 1).unwrap();
        let reference = integrate(&solver, &init, 1e-4, 5.0, &[5.0]).unwrap().fields[0].node(0)[0];
        let err = |h: f64| {
            let v = integrate(&solver, &init, h, 5.0, &[5.0]).unwrap().fields[0].node(0)[0];
            (v - reference).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!(
            (1.6..2.4).contains(&ratio),
            "expected ~2x error reduction when halving h, got {ratio:.2}"
        );
    }

    #[test]
    fn conservation_along_iterates() {
        let params = GstfParams::default();
        let m = ModelSpec::gstf_single_patch(0.25, 0.4, &params, [0.25; 4]).unwrap();
        let g = make_grid(m.measure(), 1, Boundary::None).unwrap();
        let solver = GkeSolver::new(&m, &g).unwrap();
        let init = ProbabilityField::constant(&[0.25; 4], 1).unwrap();
        let dense = integrate_dense(&solver, &init, 0.01, 50.0).unwrap();
        let worst = dense
            .fields
            .iter()
            .map(ProbabilityField::max_sum_deviation)
            .fold(0.0, f64::max);
        assert!(worst < 1e-12, "sum drifted by {worst:.3e}");
    }

    #[test]
    fn positivity_guard_rejects_large_steps() {
        let (m, g) = gf_patch(1.0, 0.5);
        let solver = GkeSolver::new(&m, &g).unwrap();
        let init = ProbabilityField::constant(&[0.5, 0.5], 1).unwrap();
        let err = integrate(&solver, &init, 2.0, 1.0, &[]).unwrap_err();
        assert!(err.to_string().contains("positivity guard"), "{err}");
    }
}
