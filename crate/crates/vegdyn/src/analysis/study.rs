//! Finite-size vs mean-field studies: convergence in N and propagation of
//! chaos.

use crate::error::{Error, Result};
use crate::gke::{integrate, quadrature, Boundary, GkeSolver, ProbabilityField};
use crate::model::{Domain, ModelSpec};
use crate::rng;
use crate::ssa::{simulate, SimParams};
use rand::Rng;
use rayon::prelude::*;

/// Knobs for [`convergence_study`]; defaults follow the documented
/// discretization (h = 0.01 on patches, 0.05 with 200 nodes on continuum
/// domains; snapshots at 1, 2, ..., t_end; absorbed replicas included —
/// the raw law is what the limit theorem bounds).
#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub exclude_absorbed: bool,
    pub snapshot_times: Option<Vec<f64>>,
    pub gke_nodes: usize,
    pub gke_h: Option<f64>,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            exclude_absorbed: false,
            snapshot_times: None,
            gke_nodes: 200,
            gke_h: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub n_list: Vec<usize>,
    /// Mean over replicas of the sup-over-time, max-over-states occupancy
    /// error against the solved equations.
    pub errors: Vec<f64>,
    pub per_replica: Vec<Vec<f64>>,
    /// Least-squares slope of log error against log N with its 95%
    /// half-width; `None` when an error vanishes (nothing to regress).
    pub slope: Option<(f64, f64)>,
    pub excluded_replicas: usize,
}

impl ConvergenceStudy {
    /// CSV export: one row per (N, replica): `N,replica,error`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "N,replica,error")?;
        for (n, row) in self.n_list.iter().zip(&self.per_replica) {
            for (r, e) in row.iter().enumerate() {
                writeln!(w, "{n},{r},{e}")?;
            }
        }
        Ok(())
    }
}

/// Reference occupancy from the solved equations: per snapshot, the
/// quadrature of each state's field against the site measure.
fn reference_occupancy(
    model: &ModelSpec,
    times: &[f64],
    opts: &StudyOptions,
) -> Result<Vec<Vec<f64>>> {
    let (boundary, nodes, h_default) = match model.domain() {
        Domain::Patches { count } => (Boundary::None, count, 0.01),
        Domain::Ring { .. } => (Boundary::Periodic, opts.gke_nodes, 0.05),
        Domain::Interval { .. } => (Boundary::Reflecting, opts.gke_nodes, 0.05),
    };
    let grid = crate::gke::make_grid(model.measure(), nodes, boundary)?;
    let solver = GkeSolver::new(model, &grid)?;
    let init = ProbabilityField::from_initial_law(model, &grid)?;
    let h = opts.gke_h.unwrap_or(h_default);
    let t_end = times.iter().cloned().fold(0.0, f64::max);
    let series = integrate(&solver, &init, h, t_end, times)?;
    series
        .fields
        .iter()
        .map(|f| {
            (0..model.n_states())
                .map(|s| quadrature(&f.state_values(s), &grid))
                .collect()
        })
        .collect()
}

/// Distance between empirical occupancy and the mean-field solution across
/// a geometric ladder of system sizes, with the fitted log-log slope.
pub fn convergence_study(
    model: &ModelSpec,
    n_list: &[usize],
    replicas: usize,
    t_end: f64,
    seed: u64,
    opts: &StudyOptions,
) -> Result<ConvergenceStudy> {
    if n_list.is_empty() || replicas == 0 {
        return Err(Error::InvalidInput(
            "need at least one system size and one replica".into(),
        ));
    }
    let times: Vec<f64> = match &opts.snapshot_times {
        Some(t) => t.clone(),
        None => (1..=(t_end.floor() as usize)).map(|k| k as f64).collect(),
    };
    if times.is_empty() {
        return Err(Error::InvalidInput("no snapshot times to compare at".into()));
    }
    let reference = reference_occupancy(model, &times, opts)?;

    let mut per_replica = Vec::with_capacity(n_list.len());
    let mut errors = Vec::with_capacity(n_list.len());
    let mut excluded = 0usize;
    for (ni, n) in n_list.iter().enumerate() {
        let runs: Vec<(f64, bool)> = (0..replicas)
            .into_par_iter()
            .map(|r| -> Result<(f64, bool)> {
                let rep_seed = rng::replica_seed(seed, (ni * replicas + r) as u64);
                let params = SimParams::new(*n, t_end, rep_seed).snapshots(times.clone());
                let out = simulate(model, &params)?;
                let fracs = out.snapshot_fractions(model.n_states());
                let mut err: f64 = 0.0;
                for (f, re) in fracs.iter().zip(&reference) {
                    for (a, b) in f.iter().zip(re) {
                        err = err.max((a - b).abs());
                    }
                }
                Ok((err, out.trajectory.absorbed.is_some()))
            })
            .collect::<Result<Vec<_>>>()?;
        let kept: Vec<f64> = runs
            .iter()
            .filter(|(_, absorbed)| !(opts.exclude_absorbed && *absorbed))
            .map(|(e, _)| *e)
            .collect();
        excluded += runs.len() - kept.len();
        if kept.is_empty() {
            return Err(Error::InvalidInput(format!(
                "every replica at N = {n} was absorbed and excluded"
            )));
        }
        errors.push(kept.iter().sum::<f64>() / kept.len() as f64);
        per_replica.push(kept);
    }

    let slope = fit_loglog(n_list, &errors);
    Ok(ConvergenceStudy {
        n_list: n_list.to_vec(),
        errors,
        per_replica,
        slope,
        excluded_replicas: excluded,
    })
}

fn fit_loglog(n_list: &[usize], errors: &[f64]) -> Option<(f64, f64)> {
    if n_list.len() < 2 || errors.iter().any(|e| *e <= 0.0) {
        return None;
    }
    let xs: Vec<f64> = n_list.iter().map(|n| (*n as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let m = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let ci = if xs.len() > 2 {
        let ss_res: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                let pred = ym + slope * (x - xm);
                (y - pred) * (y - pred)
            })
            .sum();
        1.96 * (ss_res / (m - 2.0) / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    Some((slope, ci))
}

/// Pairwise-independence diagnostics at a fixed time.
#[derive(Debug, Clone)]
pub struct CorrelationReport {
    /// Max over states of |Pearson correlation| with all sampled pairs
    /// pooled into one sample (sites on a common patch are exchangeable,
    /// so pairs share one correlation and pooling is the low-variance
    /// estimator).
    pub pooled_max_abs: f64,
    /// Max over individual pairs and states; noisy at O(1/sqrt(replicas)).
    pub per_pair_max_abs: f64,
    /// (pair, state) combinations skipped for zero variance.
    pub degenerate: usize,
    pub n_pairs: usize,
    pub n_replicas: usize,
    /// (site_i, site_j, state, correlation); `None` marks a skipped
    /// degenerate combination.
    pub per_pair: Vec<(usize, usize, usize, Option<f64>)>,
}

impl CorrelationReport {
    /// CSV export: `site_i,site_j,state,corr` (blank for degenerate).
    pub fn write_csv<W: std::io::Write>(&self, labels: &[String], mut w: W) -> Result<()> {
        writeln!(w, "site_i,site_j,state,corr")?;
        for (i, j, s, r) in &self.per_pair {
            match r {
                Some(r) => writeln!(w, "{},{},{},{}", i, j, labels[*s], r)?,
                None => writeln!(w, "{},{},{},", i, j, labels[*s])?,
            }
        }
        Ok(())
    }
}

fn pearson(n: f64, sa: f64, sb: f64, sab: f64) -> Option<f64> {
    // Indicator data: sum of squares equals the sum.
    let var_a = n * sa - sa * sa;
    let var_b = n * sb - sb * sb;
    if var_a <= 0.0 || var_b <= 0.0 {
        return None;
    }
    Some((n * sab - sa * sb) / (var_a * var_b).sqrt())
}

/// Correlation statistics from replica state snapshots (one row per
/// replica) over the given site pairs.
pub fn correlation_from_states(
    states: &[Vec<usize>],
    pairs: &[(usize, usize)],
    n_states: usize,
) -> CorrelationReport {
    let n_rep = states.len();
    let mut pooled_max: f64 = 0.0;
    let mut per_pair_max: f64 = 0.0;
    let mut degenerate = 0usize;
    let mut per_pair = Vec::with_capacity(pairs.len() * n_states);
    for x in 0..n_states {
        let (mut psa, mut psb, mut psab) = (0.0, 0.0, 0.0);
        for (i, j) in pairs {
            let (mut sa, mut sb, mut sab) = (0.0, 0.0, 0.0);
            for rep in states {
                let a = (rep[*i] == x) as u32 as f64;
                let b = (rep[*j] == x) as u32 as f64;
                sa += a;
                sb += b;
                sab += a * b;
            }
            let r = pearson(n_rep as f64, sa, sb, sab);
            match r {
                Some(r) => per_pair_max = per_pair_max.max(r.abs()),
                None => degenerate += 1,
            }
            per_pair.push((*i, *j, x, r));
            psa += sa;
            psb += sb;
            psab += sab;
        }
        if let Some(r) = pearson((n_rep * pairs.len()) as f64, psa, psb, psab) {
            pooled_max = pooled_max.max(r.abs());
        }
    }
    CorrelationReport {
        pooled_max_abs: pooled_max,
        per_pair_max_abs: per_pair_max,
        degenerate,
        n_pairs: pairs.len(),
        n_replicas: n_rep,
        per_pair,
    }
}

/// Sample disjoint site pairs, run `replicas` simulations to time `t`, and
/// report the indicator correlations between paired sites.
pub fn pairwise_correlation(
    model: &ModelSpec,
    n: usize,
    site_pairs: usize,
    t: f64,
    replicas: usize,
    seed: u64,
) -> Result<CorrelationReport> {
    if n < 2 {
        return Err(Error::InvalidInput("need at least 2 sites".into()));
    }
    if site_pairs == 0 || 2 * site_pairs > n {
        return Err(Error::InvalidInput(format!(
            "cannot draw {site_pairs} disjoint pairs from {n} sites"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut pair_rng = rng::stream(rng::replica_seed(seed, u64::MAX));
    for i in (1..idx.len()).rev() {
        let j = pair_rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let pairs: Vec<(usize, usize)> = (0..site_pairs)
        .map(|k| (idx[2 * k], idx[2 * k + 1]))
        .collect();

    let states: Vec<Vec<usize>> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<Vec<usize>> {
            let params =
                SimParams::new(n, t, rng::replica_seed(seed, r as u64)).snapshots(vec![t]);
            let out = simulate(model, &params)?;
            Ok(out.snapshots[0].clone())
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(correlation_from_states(&states, &pairs, model.n_states()))
}
