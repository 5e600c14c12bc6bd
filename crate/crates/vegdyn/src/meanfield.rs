//! Simulation of the limiting single-site jump process.
//!
//! The mean-field limit has, at each location, the law of a
//! time-inhomogeneous Markov process whose rates are read off a solved
//! probability field: `Lambda_{x,y}(t) = Phi_{x,y}(int W_{x,y} P_psi dq)`.
//! Sampling is by thinning: propose events at the per-state bound rate,
//! accept with probability `Lambda / bound` — exact for the schedule,
//! which interpolates the solved field linearly between Euler steps.

use crate::error::{Error, Result};
use crate::gke::{integrate_dense, DenseSolution, GkeSolver, Grid, ProbabilityField};
use crate::model::{ModelSpec, StateId};
use crate::rng::{self, Stream};
use rand::Rng;
use rayon::prelude::*;

/// A solved field time series with everything needed to evaluate
/// transition rates at any (t, r) in range. Immutable and shareable.
pub struct RateSchedule {
    model: ModelSpec,
    solver: GkeSolver,
    solution: DenseSolution,
}

impl RateSchedule {
    /// Solve the generalized Kolmogorov equations densely (a snapshot per
    /// Euler step) and wrap the result as a rate schedule.
    pub fn build(
        model: &ModelSpec,
        grid: &Grid,
        init: &ProbabilityField,
        h: f64,
        t_end: f64,
    ) -> Result<Self> {
        let solver = GkeSolver::new(model, grid)?;
        let solution = integrate_dense(&solver, init, h, t_end)?;
        Ok(Self {
            model: model.clone(),
            solver,
            solution,
        })
    }

    /// Wrap an externally supplied field series (e.g. a hand-made
    /// piecewise-constant law) as a schedule.
    pub fn from_solution(
        model: &ModelSpec,
        grid: &Grid,
        solution: DenseSolution,
    ) -> Result<Self> {
        let solver = GkeSolver::new(model, grid)?;
        for f in &solution.fields {
            f.check_simplex(1e-9)?;
        }
        Ok(Self {
            model: model.clone(),
            solver,
            solution,
        })
    }

    pub fn t_end(&self) -> f64 {
        self.solution.t_end
    }

    pub fn grid(&self) -> &Grid {
        self.solver.grid()
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn solution(&self) -> &DenseSolution {
        &self.solution
    }

    /// Probability vector of the driving solution at (t, r), interpolated
    /// linearly in time and nearest-node in space.
    pub fn law_at(&self, t: f64, r: f64) -> Result<Vec<f64>> {
        let node = self.solver.grid().nearest_node(r);
        let (i, frac) = self.solution.locate(t)?;
        let a = self.solution.fields[i].node(node);
        let b = self.solution.fields[i + 1].node(node);
        Ok(a.iter()
            .zip(b)
            .map(|(x, y)| x + frac * (y - x))
            .collect())
    }

    /// Precompute the per-transition field series at one location.
    pub fn site_schedule(&self, r: f64) -> SiteSchedule<'_> {
        let node = self.solver.grid().nearest_node(r);
        let n_trans = self.model.transitions().len();
        let mut series = vec![Vec::with_capacity(self.solution.fields.len()); n_trans];
        for f in &self.solution.fields {
            let u = self.solver.transition_fields_at(f, node);
            for (t, v) in u.iter().enumerate() {
                series[t].push(*v);
            }
        }
        // Per-transition rate bound over the series: the rate functions are
        // monotone, so the extremes of the interpolated field bound the
        // rate.
        let bounds: Vec<f64> = self
            .model
            .transitions()
            .iter()
            .enumerate()
            .map(|(t, tr)| {
                let (lo, hi) = series[t]
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(*v), hi.max(*v))
                    });
                tr.rate.eval(lo).max(tr.rate.eval(hi))
            })
            .collect();
        SiteSchedule {
            schedule: self,
            node,
            r,
            series,
            bounds,
        }
    }
}

/// Rate evaluations pinned to one location.
pub struct SiteSchedule<'a> {
    schedule: &'a RateSchedule,
    node: usize,
    r: f64,
    /// Per transition: kernel field (amplitude included) at every step.
    series: Vec<Vec<f64>>,
    /// Per transition: sup of the rate over the whole schedule.
    bounds: Vec<f64>,
}

impl SiteSchedule<'_> {
    pub fn location(&self) -> f64 {
        self.r
    }

    pub fn node(&self) -> usize {
        self.node
    }

    fn field(&self, trans: usize, t: f64) -> Result<f64> {
        let (i, frac) = self.schedule.solution.locate(t)?;
        let s = &self.series[trans];
        Ok(s[i] + frac * (s[i + 1] - s[i]))
    }

    /// `Lambda_{x,y}(t)` for every transition out of `x`.
    pub fn rates_from(&self, x: StateId, t: f64) -> Result<Vec<(StateId, f64)>> {
        let model = &self.schedule.model;
        model
            .transitions_from(x)
            .iter()
            .map(|&ti| {
                let tr = &model.transitions()[ti];
                let u = self.field(ti, t)?;
                Ok((tr.to, tr.rate.eval(u)))
            })
            .collect()
    }

    /// Total thinning bound for proposals out of `x`.
    pub fn bound_from(&self, x: StateId) -> f64 {
        self.schedule
            .model
            .transitions_from(x)
            .iter()
            .map(|&ti| self.bounds[ti])
            .sum()
    }

    /// Initial law of the schedule at this location.
    pub fn initial_law(&self) -> &[f64] {
        self.schedule.solution.fields[0].node(self.node)
    }
}

/// Rates `Lambda_{x,y}(t)` of the auxiliary inhomogeneous process at
/// location `r`, state `x`.
pub fn lambda_rates(
    s: &RateSchedule,
    t: f64,
    r: f64,
    x: StateId,
) -> Result<Vec<(StateId, f64)>> {
    s.site_schedule(r).rates_from(x, t)
}

/// One single-site sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteTrajectory {
    pub r: f64,
    pub init: StateId,
    /// (time, from, to), strictly increasing in time.
    pub events: Vec<(f64, StateId, StateId)>,
    pub t_end: f64,
}

impl SiteTrajectory {
    pub fn state_at(&self, t: f64) -> StateId {
        let mut s = self.init;
        for (et, _, to) in &self.events {
            if *et > t {
                break;
            }
            s = *to;
        }
        s
    }
}

/// Exact thinning sampler for the inhomogeneous single-site process.
pub fn simulate_site(
    s: &RateSchedule,
    r: f64,
    init: StateId,
    t_end: f64,
    seed: u64,
) -> Result<SiteTrajectory> {
    let site = s.site_schedule(r);
    simulate_site_on(&site, init, t_end, &mut rng::stream(seed))
}

fn simulate_site_on(
    site: &SiteSchedule<'_>,
    init: StateId,
    t_end: f64,
    rng: &mut Stream,
) -> Result<SiteTrajectory> {
    if t_end > site.schedule.solution.t_end + 1e-9 {
        return Err(Error::TimeOutOfRange {
            t: t_end,
            t_max: site.schedule.solution.t_end,
        });
    }
    let mut state = init;
    let mut t = 0.0;
    let mut events = Vec::new();
    loop {
        let bound = site.bound_from(state);
        if bound <= 0.0 {
            break;
        }
        t += rng::exp_variate(rng, bound);
        if t > t_end {
            break;
        }
        let u: f64 = rng.random::<f64>() * bound;
        let mut cum = 0.0;
        for (to, lam) in site.rates_from(state, t)? {
            cum += lam;
            if u < cum {
                events.push((t, state, to));
                state = to;
                break;
            }
        }
        // u >= cum: thinned proposal, no transition.
    }
    Ok(SiteTrajectory {
        r: site.r,
        init,
        events,
        t_end,
    })
}

/// Empirical state distribution of replicated single-site paths, with
/// binomial standard errors.
#[derive(Debug, Clone)]
pub struct EnsembleOccupancy {
    pub times: Vec<f64>,
    /// `freq[time][state]`.
    pub freq: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub n_replicas: usize,
}

impl EnsembleOccupancy {
    /// CSV export: `t,state,frequency,stderr`.
    pub fn write_csv<W: std::io::Write>(&self, labels: &[String], mut w: W) -> Result<()> {
        writeln!(w, "t,state,frequency,stderr")?;
        for (i, t) in self.times.iter().enumerate() {
            for (s, label) in labels.iter().enumerate() {
                writeln!(w, "{},{},{},{}", t, label, self.freq[i][s], self.stderr[i][s])?;
            }
        }
        Ok(())
    }
}

/// Run `n_replicas` single-site paths at location `r` (initial states drawn
/// from the schedule's initial law there) and tabulate the empirical
/// occupancy at the given times. Replicas use derived streams and run
/// concurrently; the reduction is order-independent.
pub fn ensemble_occupancy(
    s: &RateSchedule,
    r: f64,
    n_replicas: usize,
    times: &[f64],
    seed: u64,
) -> Result<EnsembleOccupancy> {
    if n_replicas == 0 {
        return Err(Error::InvalidInput("need at least one replica".into()));
    }
    let site = s.site_schedule(r);
    let k = s.model.n_states();
    let t_end = times.iter().cloned().fold(0.0, f64::max);
    let init_law = site.initial_law().to_vec();

    let counts: Vec<Vec<usize>> = (0..n_replicas)
        .into_par_iter()
        .map(|rep| -> Result<Vec<usize>> {
            let mut stream = rng::replica_stream(seed, rep as u64);
            let u: f64 = stream.random();
            let mut acc = 0.0;
            let mut init = k - 1;
            for (st, w) in init_law.iter().enumerate() {
                acc += w;
                if u < acc {
                    init = st;
                    break;
                }
            }
            let traj = simulate_site_on(&site, init, t_end, &mut stream)?;
            Ok(times.iter().map(|t| traj.state_at(*t)).collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut freq = vec![vec![0.0; k]; times.len()];
    for rep in &counts {
        for (i, st) in rep.iter().enumerate() {
            freq[i][*st] += 1.0;
        }
    }
    let n = n_replicas as f64;
    let mut stderr = vec![vec![0.0; k]; times.len()];
    for i in 0..times.len() {
        for st in 0..k {
            freq[i][st] /= n;
            stderr[i][st] = (freq[i][st] * (1.0 - freq[i][st]) / n).sqrt();
        }
    }
    Ok(EnsembleOccupancy {
        times: times.to_vec(),
        freq,
        stderr,
        n_replicas,
    })
}
