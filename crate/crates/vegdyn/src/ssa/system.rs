//! The site system and its two event engines.

use crate::error::{Error, Result};
use crate::model::{Kernel, KernelKind, ModelSpec, StateId};
use crate::rng::{self, Stream};
use crate::ssa::trajectory::{Event, SimOutput, Trajectory};
use rand::Rng;

/// Tuning knobs for the simulator; the defaults match the documented cost
/// model.
#[derive(Debug, Clone)]
pub struct SsaOptions {
    /// Kernel rows are precomputed while `8 * N^2 * #shapes` stays under
    /// this budget; beyond it they are evaluated on demand.
    pub kernel_budget_bytes: usize,
    /// On-demand kernel evaluation skips pairs beyond this many sigmas
    /// (truncation error < 1e-8 of kernel mass; the lost mass is *not*
    /// silently renormalized).
    pub cutoff_sigmas: Option<f64>,
    /// Field caches are rebuilt from scratch this often to arrest
    /// floating-point drift.
    pub refresh_every: usize,
}

impl Default for SsaOptions {
    fn default() -> Self {
        Self {
            kernel_budget_bytes: 512 << 20,
            cutoff_sigmas: Some(6.0),
            refresh_every: 100_000,
        }
    }
}

/// Result of one call to [`SiteSystem::step_until`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Event(Event),
    /// Total rate is zero; the configuration can never change again.
    Absorbed,
    /// The next waiting time would cross the requested horizon; the clock
    /// stops there and no event fires.
    TimeLimit,
}

/// Per-transition kernel reference: (convolution pair index, amplitude).
type ConvRef = Option<(usize, f64)>;

struct TransTable {
    /// Per transition: from, to, rate index into the model, conv ref.
    by_from: Vec<Vec<usize>>,
    conv: Vec<ConvRef>,
}

/// N sites with positions, states, cached interaction fields, and a seeded
/// RNG stream. Confined to one execution context for its lifetime; run
/// replicas concurrently with derived streams instead of sharing one
/// system.
pub struct SiteSystem {
    model: ModelSpec,
    positions: Vec<f64>,
    states: Vec<StateId>,
    t: f64,
    rng: Stream,
    table: TransTable,
    engine: Engine,
    absorbed: bool,
    events_since_refresh: usize,
    refresh_every: usize,
    #[cfg(debug_assertions)]
    events_since_check: usize,
}

enum Engine {
    Patch(PatchEngine),
    Meso(MesoEngine),
}

// ---------------------------------------------------------------------
// Patch engine: class-aggregated rates.
// ---------------------------------------------------------------------

struct PatchEngine {
    m: usize,
    n: usize,
    patch_of: Vec<usize>,
    counts: Vec<Vec<usize>>,
    class_sites: Vec<Vec<Vec<u32>>>,
    site_slot: Vec<usize>,
    /// Per pair: the unit-amplitude M x M shape matrix.
    shape_mats: Vec<Vec<f64>>,
    psi: Vec<StateId>,
    /// fields[pair][patch] = (1/N) sum_k W(p, k) counts[k][psi].
    fields: Vec<Vec<f64>>,
}

impl PatchEngine {
    fn new(
        model: &ModelSpec,
        positions: &[f64],
        states: &[StateId],
        pairs: &[(KernelKind, StateId)],
    ) -> Result<Self> {
        let m = match model.domain() {
            crate::model::Domain::Patches { count } => count,
            _ => unreachable!("patch engine on continuum domain"),
        };
        let n = positions.len();
        let k = model.n_states();
        let patch_of: Vec<usize> = positions.iter().map(|p| p.round() as usize).collect();
        if let Some(bad) = patch_of.iter().find(|p| **p >= m) {
            return Err(Error::IndexOutOfRange {
                what: "patch",
                index: *bad,
                len: m,
            });
        }
        let mut counts = vec![vec![0usize; k]; m];
        let mut class_sites = vec![vec![Vec::new(); k]; m];
        let mut site_slot = vec![0usize; n];
        for (i, (&p, &s)) in patch_of.iter().zip(states).enumerate() {
            counts[p][s] += 1;
            site_slot[i] = class_sites[p][s].len();
            class_sites[p][s].push(i as u32);
        }
        let mut shape_mats = Vec::new();
        let mut psi = Vec::new();
        for (shape, dep) in pairs {
            let entries = match shape {
                KernelKind::PatchMatrix { m: mm, entries } => {
                    if *mm != m {
                        return Err(Error::LengthMismatch {
                            expected: m,
                            got: *mm,
                        });
                    }
                    entries.clone()
                }
                KernelKind::Constant { c } => vec![*c; m * m],
                other => {
                    return Err(Error::Config(format!(
                        "kernel {other:?} is not defined on a patch domain"
                    )))
                }
            };
            shape_mats.push(entries);
            psi.push(*dep);
        }
        let mut eng = Self {
            m,
            n,
            patch_of,
            counts,
            class_sites,
            site_slot,
            shape_mats,
            psi,
            fields: Vec::new(),
        };
        eng.fields = eng.fields_from_scratch();
        Ok(eng)
    }

    fn fields_from_scratch(&self) -> Vec<Vec<f64>> {
        let nf = self.n as f64;
        self.shape_mats
            .iter()
            .zip(&self.psi)
            .map(|(mat, psi)| {
                (0..self.m)
                    .map(|p| {
                        (0..self.m)
                            .map(|q| mat[p * self.m + q] * self.counts[q][*psi] as f64)
                            .sum::<f64>()
                            / nf
                    })
                    .collect()
            })
            .collect()
    }

    fn apply(&mut self, site: usize, from: StateId, to: StateId) {
        let p = self.patch_of[site];
        // swap-remove from the old class list
        let slot = self.site_slot[site];
        let list = &mut self.class_sites[p][from];
        let last = *list.last().unwrap();
        list[slot] = last;
        self.site_slot[last as usize] = slot;
        list.pop();
        self.site_slot[site] = self.class_sites[p][to].len();
        self.class_sites[p][to].push(site as u32);
        self.counts[p][from] -= 1;
        self.counts[p][to] += 1;
        // Fields follow exactly from the integer counts, so recomputing
        // them beats incrementing: no roundoff residue can mask an
        // absorbing configuration behind a ~1e-17 rate.
        self.fields = self.fields_from_scratch();
    }
}

// ---------------------------------------------------------------------
// Mesoscale engine: per-site field caches.
// ---------------------------------------------------------------------

enum RowStore {
    /// rows[j * n + i] = W(r_j, r_i), unit amplitude.
    Dense(Vec<f64>),
    Lazy {
        kernel: Kernel,
        cutoff: Option<f64>,
    },
}

struct MesoPair {
    psi: StateId,
    rows: RowStore,
}

struct MesoEngine {
    n: usize,
    pairs: Vec<MesoPair>,
    /// fields[pair][site].
    fields: Vec<Vec<f64>>,
    /// Per-site total outflow rate, rebuilt after every event.
    rates: Vec<f64>,
    r_tot: f64,
    /// Sites per state; a field is exactly zero while its dependency
    /// state is absent, whatever the incremental roundoff would say.
    state_counts: Vec<usize>,
}

impl MesoEngine {
    fn new(
        model: &ModelSpec,
        positions: &[f64],
        states: &[StateId],
        table: &TransTable,
        pairs: &[(KernelKind, StateId)],
        opts: &SsaOptions,
    ) -> Result<Self> {
        let n = positions.len();
        let dense_ok = 8usize
            .saturating_mul(n)
            .saturating_mul(n)
            .saturating_mul(pairs.len().max(1))
            <= opts.kernel_budget_bytes;
        let mut built: Vec<MesoPair> = Vec::new();
        for (shape, dep) in pairs {
            let unit = Kernel {
                kind: shape.clone(),
                amplitude: 1.0,
            };
            let rows = if dense_ok {
                let mut rows = vec![0.0; n * n];
                for j in 0..n {
                    for i in 0..n {
                        rows[j * n + i] = unit.eval(positions[j], positions[i])?;
                    }
                }
                RowStore::Dense(rows)
            } else {
                let cutoff = opts.cutoff_sigmas.and_then(|s| match shape {
                    KernelKind::GaussianRing { sigma, .. }
                    | KernelKind::GaussianLine { sigma } => Some(s * sigma),
                    _ => None,
                });
                RowStore::Lazy {
                    kernel: unit,
                    cutoff,
                }
            };
            built.push(MesoPair { psi: *dep, rows });
        }
        let mut state_counts = vec![0usize; model.n_states()];
        for s in states {
            state_counts[*s] += 1;
        }
        let mut eng = Self {
            n,
            pairs: built,
            fields: Vec::new(),
            rates: vec![0.0; n],
            r_tot: 0.0,
            state_counts,
        };
        eng.fields = eng.fields_from_scratch(positions, states)?;
        eng.recompute_rates(model, table, states)?;
        Ok(eng)
    }

    fn row_eval(&self, pair: usize, j: usize, i: usize, positions: &[f64]) -> f64 {
        match &self.pairs[pair].rows {
            RowStore::Dense(rows) => rows[j * self.n + i],
            RowStore::Lazy { kernel, cutoff } => {
                if let Some(rc) = cutoff {
                    let d = match kernel.kind {
                        KernelKind::GaussianRing { length, .. } => {
                            crate::model::kernel::ring_distance(positions[j], positions[i], length)
                        }
                        _ => (positions[j] - positions[i]).abs(),
                    };
                    if d > *rc {
                        return 0.0;
                    }
                }
                kernel.eval(positions[j], positions[i]).unwrap_or(0.0)
            }
        }
    }

    fn fields_from_scratch(
        &self,
        positions: &[f64],
        states: &[StateId],
    ) -> Result<Vec<Vec<f64>>> {
        let nf = self.n as f64;
        let mut out = Vec::with_capacity(self.pairs.len());
        for (p, pair) in self.pairs.iter().enumerate() {
            let mut f = vec![0.0; self.n];
            for j in 0..self.n {
                if states[j] == pair.psi {
                    for i in 0..self.n {
                        f[i] += self.row_eval(p, j, i, positions);
                    }
                }
            }
            for v in f.iter_mut() {
                *v /= nf;
            }
            out.push(f);
        }
        Ok(out)
    }

    fn recompute_rates(
        &mut self,
        model: &ModelSpec,
        table: &TransTable,
        states: &[StateId],
    ) -> Result<()> {
        let trans = model.transitions();
        let mut tot = 0.0;
        for i in 0..self.n {
            let mut r = 0.0;
            for &ti in &table.by_from[states[i]] {
                let u = match table.conv[ti] {
                    None => 0.0,
                    Some((pair, amp)) => amp * self.fields[pair][i],
                };
                r += trans[ti].rate.eval(u);
            }
            self.rates[i] = r;
            tot += r;
        }
        if !tot.is_finite() {
            return Err(Error::NonFinite {
                context: "total transition rate".into(),
            });
        }
        self.r_tot = tot;
        Ok(())
    }

    fn apply(&mut self, positions: &[f64], site: usize, from: StateId, to: StateId) {
        let nf = self.n as f64;
        self.state_counts[from] -= 1;
        self.state_counts[to] += 1;
        for p in 0..self.pairs.len() {
            let delta = if self.pairs[p].psi == from {
                -1.0
            } else if self.pairs[p].psi == to {
                1.0
            } else {
                continue;
            };
            if self.state_counts[self.pairs[p].psi] == 0 {
                self.fields[p].fill(0.0);
                continue;
            }
            match &self.pairs[p].rows {
                RowStore::Dense(rows) => {
                    let row = &rows[site * self.n..(site + 1) * self.n];
                    for (f, w) in self.fields[p].iter_mut().zip(row) {
                        *f += delta * w / nf;
                    }
                }
                RowStore::Lazy { .. } => {
                    for i in 0..self.n {
                        let w = self.row_eval(p, site, i, positions);
                        self.fields[p][i] += delta * w / nf;
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------
// Construction.
// ---------------------------------------------------------------------

/// Draw positions and initial states, then build all field caches from
/// scratch. Deterministic given the seed.
pub fn init_state(model: &ModelSpec, n: usize, seed: u64) -> Result<SiteSystem> {
    init_state_with(model, n, seed, &SsaOptions::default())
}

pub fn init_state_with(
    model: &ModelSpec,
    n: usize,
    seed: u64,
    opts: &SsaOptions,
) -> Result<SiteSystem> {
    if n == 0 {
        return Err(Error::InvalidInput("site count must be at least 1".into()));
    }
    let mut stream = rng::stream(seed);
    let positions = crate::model::sample_sites(model.measure(), n, &mut stream)?;
    let states = draw_initial_states(model, &positions, &mut stream)?;
    SiteSystem::assemble(model, positions, states, stream, opts)
}

fn draw_initial_states(
    model: &ModelSpec,
    positions: &[f64],
    stream: &mut Stream,
) -> Result<Vec<StateId>> {
    let k = model.n_states();
    match model.assignment() {
        crate::model::Assignment::Iid => Ok(positions
            .iter()
            .map(|x| {
                let p = model.initial_law().at(*x);
                let u: f64 = stream.random();
                let mut acc = 0.0;
                for (s, w) in p.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        return s;
                    }
                }
                k - 1
            })
            .collect()),
        crate::model::Assignment::Quota => {
            let p = match model.initial_law() {
                crate::model::InitialLaw::Constant { p } => p.clone(),
                _ => {
                    return Err(Error::Config(
                        "quota assignment requires a spatially constant initial law".into(),
                    ))
                }
            };
            let n = positions.len();
            // Largest-remainder quotas, then a Fisher-Yates shuffle.
            let mut counts: Vec<usize> = p.iter().map(|w| (w * n as f64).floor() as usize).collect();
            let mut rem: Vec<(f64, usize)> = p
                .iter()
                .enumerate()
                .map(|(s, w)| (w * n as f64 - counts[s] as f64, s))
                .collect();
            rem.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let mut deficit = n - counts.iter().sum::<usize>();
            for (_, s) in rem {
                if deficit == 0 {
                    break;
                }
                counts[s] += 1;
                deficit -= 1;
            }
            let mut states: Vec<StateId> = counts
                .iter()
                .enumerate()
                .flat_map(|(s, c)| std::iter::repeat_n(s, *c))
                .collect();
            for i in (1..states.len()).rev() {
                let j = stream.random_range(0..=i);
                states.swap(i, j);
            }
            Ok(states)
        }
    }
}

impl SiteSystem {
    /// Build a system with explicit positions and states (used to start
    /// from exact configurations, e.g. a quasi-stationary distribution).
    pub fn with_states(
        model: &ModelSpec,
        positions: Vec<f64>,
        states: Vec<StateId>,
        seed: u64,
    ) -> Result<Self> {
        if positions.len() != states.len() || positions.is_empty() {
            return Err(Error::LengthMismatch {
                expected: positions.len(),
                got: states.len(),
            });
        }
        if let Some(bad) = states.iter().find(|s| **s >= model.n_states()) {
            return Err(Error::IndexOutOfRange {
                what: "state",
                index: *bad,
                len: model.n_states(),
            });
        }
        Self::assemble(
            model,
            positions,
            states,
            rng::stream(seed),
            &SsaOptions::default(),
        )
    }

    fn assemble(
        model: &ModelSpec,
        positions: Vec<f64>,
        states: Vec<StateId>,
        rng: Stream,
        opts: &SsaOptions,
    ) -> Result<Self> {
        let (shapes, refs) = model.kernel_shapes();
        // Unique (shape, psi) pairs shared by transitions.
        let mut pairs: Vec<(KernelKind, StateId)> = Vec::new();
        let mut conv: Vec<ConvRef> = Vec::new();
        for (t, kref) in model.transitions().iter().zip(&refs) {
            conv.push(match (kref, t.depends_on) {
                (Some((shape, amp)), Some(psi)) => {
                    let key = (shapes[*shape].clone(), psi);
                    let idx = pairs.iter().position(|p| *p == key).unwrap_or_else(|| {
                        pairs.push(key.clone());
                        pairs.len() - 1
                    });
                    Some((idx, *amp))
                }
                _ => None,
            });
        }
        let mut by_from = vec![Vec::new(); model.n_states()];
        for (i, t) in model.transitions().iter().enumerate() {
            by_from[t.from].push(i);
        }
        let table = TransTable { by_from, conv };

        let engine = if model.is_patch_model() {
            Engine::Patch(PatchEngine::new(model, &positions, &states, &pairs)?)
        } else {
            Engine::Meso(MesoEngine::new(
                model, &positions, &states, &table, &pairs, opts,
            )?)
        };
        Ok(Self {
            model: model.clone(),
            positions,
            states,
            t: 0.0,
            rng,
            table,
            engine,
            absorbed: false,
            events_since_refresh: 0,
            refresh_every: opts.refresh_every.max(1),
            #[cfg(debug_assertions)]
            events_since_check: 0,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.states.len()
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn states(&self) -> &[StateId] {
        &self.states
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn is_absorbed(&self) -> bool {
        self.absorbed
    }

    /// Per-state site fractions.
    pub fn occupancy_now(&self) -> Vec<f64> {
        let mut c = vec![0usize; self.model.n_states()];
        for s in &self.states {
            c[*s] += 1;
        }
        c.iter()
            .map(|v| *v as f64 / self.states.len() as f64)
            .collect()
    }

    /// Field value `(1/N) sum_j W(r_i, r_j) 1{X_j = psi}` for the given
    /// cached pair at site `i`.
    fn field_at(&self, pair: usize, i: usize) -> f64 {
        match &self.engine {
            Engine::Patch(e) => e.fields[pair][e.patch_of[i]],
            Engine::Meso(e) => e.fields[pair][i],
        }
    }

    /// Rates of every transition available to site `i` in its current
    /// state.
    pub fn site_rates(&self, i: usize) -> Vec<(StateId, f64)> {
        let trans = self.model.transitions();
        self.table.by_from[self.states[i]]
            .iter()
            .map(|&ti| {
                let u = match self.table.conv[ti] {
                    None => 0.0,
                    Some((pair, amp)) => amp * self.field_at(pair, i),
                };
                (trans[ti].to, trans[ti].rate.eval(u))
            })
            .collect()
    }

    /// Total rate over all sites.
    pub fn total_rate(&self) -> f64 {
        match &self.engine {
            Engine::Meso(e) => e.r_tot,
            Engine::Patch(e) => {
                let trans = self.model.transitions();
                let mut tot = 0.0;
                for p in 0..e.m {
                    for (x, froms) in self.table.by_from.iter().enumerate() {
                        let c = e.counts[p][x];
                        if c == 0 {
                            continue;
                        }
                        let mut r = 0.0;
                        for &ti in froms {
                            let u = match self.table.conv[ti] {
                                None => 0.0,
                                Some((pair, amp)) => amp * e.fields[pair][p],
                            };
                            r += trans[ti].rate.eval(u);
                        }
                        tot += c as f64 * r;
                    }
                }
                tot
            }
        }
    }

    /// Advance by one event, unless absorption or `t_max` comes first.
    pub fn step_until(&mut self, t_max: f64) -> Result<StepOutcome> {
        if self.absorbed {
            return Ok(StepOutcome::Absorbed);
        }
        let r_tot = self.total_rate();
        if !r_tot.is_finite() {
            return Err(Error::NonFinite {
                context: "total transition rate".into(),
            });
        }
        if r_tot <= 0.0 {
            self.absorbed = true;
            return Ok(StepOutcome::Absorbed);
        }
        let tau = rng::exp_variate(&mut self.rng, r_tot);
        if self.t + tau > t_max {
            self.t = t_max;
            return Ok(StepOutcome::TimeLimit);
        }
        self.t += tau;
        // Direct-method selection: cumulative scan in fixed site order.
        let target: f64 = self.rng.random::<f64>() * r_tot;
        let (site, to) = self.select_event(target)?;
        let from = self.states[site];
        self.apply_event(site, from, to)?;
        Ok(StepOutcome::Event(Event {
            t: self.t,
            site: site as u32,
            from: from as u8,
            to: to as u8,
        }))
    }

    /// One event or absorption (no time horizon).
    pub fn step(&mut self) -> Result<StepOutcome> {
        self.step_until(f64::INFINITY)
    }

    fn select_event(&mut self, target: f64) -> Result<(usize, StateId)> {
        let trans = self.model.transitions();
        match &self.engine {
            Engine::Meso(e) => {
                let mut acc = 0.0;
                let mut site = usize::MAX;
                let mut last_live_site = None;
                for (i, r) in e.rates.iter().enumerate() {
                    if *r > 0.0 {
                        last_live_site = Some(i);
                    }
                    acc += r;
                    if target < acc {
                        site = i;
                        break;
                    }
                }
                let site = if site == usize::MAX {
                    last_live_site.ok_or(Error::NonFinite {
                        context: "event selection".into(),
                    })?
                } else {
                    site
                };
                // Re-scan the chosen site's transitions. Re-summation can
                // land `target` an ulp past the site's total; fall back to
                // the last transition that carried rate.
                let local = acc - e.rates[site];
                let mut cum = local;
                let rates = self.site_rates(site);
                let mut last_live: Option<StateId> = None;
                for (to, r) in &rates {
                    cum += r;
                    if *r > 0.0 {
                        last_live = Some(*to);
                    }
                    if target < cum && *r > 0.0 {
                        return Ok((site, *to));
                    }
                }
                last_live.map(|to| (site, to)).ok_or(Error::NonFinite {
                    context: "event selection".into(),
                })
            }
            Engine::Patch(e) => {
                let mut acc = 0.0;
                let mut last_live: Option<(usize, usize, usize)> = None;
                for p in 0..e.m {
                    for (x, froms) in self.table.by_from.iter().enumerate() {
                        let c = e.counts[p][x];
                        if c == 0 {
                            continue;
                        }
                        for &ti in froms {
                            let u = match self.table.conv[ti] {
                                None => 0.0,
                                Some((pair, amp)) => amp * e.fields[pair][p],
                            };
                            let class_rate = c as f64 * trans[ti].rate.eval(u);
                            if class_rate > 0.0 {
                                last_live = Some((p, x, ti));
                            }
                            acc += class_rate;
                            if target < acc && class_rate > 0.0 {
                                let pick = self.rng.random_range(0..c);
                                let site = e.class_sites[p][x][pick] as usize;
                                return Ok((site, trans[ti].to));
                            }
                        }
                    }
                }
                // Roundoff pushed the target past the final cumulative sum;
                // take the last class that carried rate.
                if let Some((p, x, ti)) = last_live {
                    let c = e.counts[p][x];
                    let pick = self.rng.random_range(0..c);
                    let site = e.class_sites[p][x][pick] as usize;
                    return Ok((site, trans[ti].to));
                }
                Err(Error::NonFinite {
                    context: "event selection".into(),
                })
            }
        }
    }

    fn apply_event(&mut self, site: usize, from: StateId, to: StateId) -> Result<()> {
        match &mut self.engine {
            Engine::Patch(e) => e.apply(site, from, to),
            Engine::Meso(e) => e.apply(&self.positions, site, from, to),
        }
        self.states[site] = to;
        if let Engine::Meso(e) = &mut self.engine {
            e.recompute_rates(&self.model, &self.table, &self.states)?;
        }
        self.events_since_refresh += 1;
        if self.events_since_refresh >= self.refresh_every {
            self.refresh_caches()?;
        }
        #[cfg(debug_assertions)]
        {
            self.events_since_check += 1;
            if self.events_since_check >= 4096 {
                self.events_since_check = 0;
                debug_assert!(
                    self.cache_consistency_error().unwrap_or(f64::INFINITY) < 1e-9,
                    "field caches drifted beyond 1e-9"
                );
            }
        }
        Ok(())
    }

    /// Rebuild all field caches from scratch.
    pub fn refresh_caches(&mut self) -> Result<()> {
        self.events_since_refresh = 0;
        match &mut self.engine {
            Engine::Patch(e) => {
                e.fields = e.fields_from_scratch();
            }
            Engine::Meso(e) => {
                e.fields = e.fields_from_scratch(&self.positions, &self.states)?;
                e.recompute_rates(&self.model, &self.table, &self.states)?;
            }
        }
        Ok(())
    }

    /// Largest relative deviation between the cached fields and a
    /// from-scratch recomputation.
    pub fn cache_consistency_error(&self) -> Result<f64> {
        let fresh = match &self.engine {
            Engine::Patch(e) => e.fields_from_scratch(),
            Engine::Meso(e) => e.fields_from_scratch(&self.positions, &self.states)?,
        };
        let cached = match &self.engine {
            Engine::Patch(e) => &e.fields,
            Engine::Meso(e) => &e.fields,
        };
        let mut worst: f64 = 0.0;
        for (a, b) in cached.iter().zip(&fresh) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs() / y.abs().max(1.0));
            }
        }
        Ok(worst)
    }
}

/// Rates for every transition available to site `i`, computed from the
/// cached fields. In debug builds the caches are recomputed and compared.
pub fn transition_rates(sys: &SiteSystem, i: usize) -> Result<Vec<(StateId, f64)>> {
    if i >= sys.n_sites() {
        return Err(Error::IndexOutOfRange {
            what: "site",
            index: i,
            len: sys.n_sites(),
        });
    }
    #[cfg(debug_assertions)]
    {
        let err = sys.cache_consistency_error()?;
        debug_assert!(err < 1e-9, "field cache inconsistency: {err:.2e}");
    }
    let rates = sys.site_rates(i);
    for (_, r) in &rates {
        if !r.is_finite() {
            return Err(Error::NonFinite {
                context: format!("transition rate at site {i}"),
            });
        }
    }
    Ok(rates)
}

/// Simulation parameters for [`simulate`].
#[derive(Debug, Clone)]
pub struct SimParams {
    pub n_sites: usize,
    pub t_end: f64,
    pub seed: u64,
    pub snapshot_times: Vec<f64>,
    pub event_cap: usize,
}

impl SimParams {
    pub fn new(n_sites: usize, t_end: f64, seed: u64) -> Self {
        Self {
            n_sites,
            t_end,
            seed,
            snapshot_times: Vec::new(),
            event_cap: 10_000_000,
        }
    }

    pub fn snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }
}

/// Run the direct method until `t_end` or absorption, recording events and
/// per-snapshot state vectors. Reproducible given the seed.
pub fn simulate(model: &ModelSpec, params: &SimParams) -> Result<SimOutput> {
    simulate_with(model, params, &SsaOptions::default())
}

pub fn simulate_with(
    model: &ModelSpec,
    params: &SimParams,
    opts: &SsaOptions,
) -> Result<SimOutput> {
    if !(params.t_end >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "t_end must be nonnegative, got {}",
            params.t_end
        )));
    }
    let mut sys = init_state_with(model, params.n_sites, params.seed, opts)?;
    let mut snap_times = params.snapshot_times.clone();
    snap_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut snapshots: Vec<Vec<StateId>> = Vec::with_capacity(snap_times.len());
    let mut next_snap = 0;

    let initial_states = sys.states().to_vec();
    let positions = sys.positions().to_vec();
    let mut events: Vec<Event> = Vec::new();
    let mut absorbed_at = None;

    loop {
        let outcome = sys.step_until(params.t_end)?;
        match outcome {
            StepOutcome::Event(e) => {
                while next_snap < snap_times.len() && snap_times[next_snap] < e.t {
                    // State at the snapshot time is the pre-event state.
                    let mut s = sys.states().to_vec();
                    s[e.site as usize] = e.from as StateId;
                    snapshots.push(s);
                    next_snap += 1;
                }
                events.push(e);
                if events.len() >= params.event_cap {
                    return Err(Error::EventCapExceeded {
                        cap: params.event_cap,
                        time_reached: e.t,
                        t_end: params.t_end,
                    });
                }
            }
            StepOutcome::Absorbed => {
                absorbed_at = Some(sys.time());
                break;
            }
            StepOutcome::TimeLimit => break,
        }
    }
    while next_snap < snap_times.len() {
        snapshots.push(sys.states().to_vec());
        next_snap += 1;
    }

    Ok(SimOutput {
        trajectory: Trajectory {
            events,
            t_end: params.t_end,
            initial_states,
            positions,
            n_states: model.n_states(),
            absorbed: absorbed_at,
        },
        snapshot_times: snap_times,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        Assignment, Domain, GenericModel, GenericTransition, GstfParams, InitialLaw,
        MeasureKind, ModelConfig, ModelFamily, RateFn, SigmoidParams,
    };

    fn gf_patch(jbar: f64, init_grass: f64) -> ModelSpec {
        ModelSpec::gf_single_patch(jbar, SigmoidParams::phi_default(), init_grass).unwrap()
    }

    fn gf_patch_quota(jbar: f64, init_grass: f64) -> ModelSpec {
        crate::model::build_model(&ModelConfig {
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
            assignment: Assignment::Quota,
            generic: None,
        })
        .unwrap()
    }

    #[test]
    fn all_grass_init_has_zero_fields() {
        let model = gf_patch(1.0, 1.0);
        let sys = init_state(&model, 100, 3).unwrap();
        assert!(sys.states().iter().all(|s| *s == 0));
        for i in [0usize, 57, 99] {
            let rates = transition_rates(&sys, i).unwrap();
            assert!(rates.iter().all(|(_, r)| *r == 0.0));
        }
    }

    #[test]
    fn uniform_gstf_counts_within_binomial_band() {
        let model =
            ModelSpec::gstf_single_patch(0.25, 0.4, &GstfParams::default(), [0.25; 4]).unwrap();
        let sys = init_state(&model, 4000, 11).unwrap();
        let mut counts = [0usize; 4];
        for s in sys.states() {
            counts[*s] += 1;
        }
        let band = 4.0 * (4000.0_f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!(
                (c as f64 - 1000.0).abs() < band,
                "count {c} outside 4-sigma band"
            );
        }
    }

    #[test]
    fn single_atom_positions_coincide() {
        let model = gf_patch(1.0, 0.5);
        let sys = init_state(&model, 10, 5).unwrap();
        assert!(sys.positions().iter().all(|p| *p == 0.0));
    }

    #[test]
    fn transition_rates_match_two_state_chain() {
        // Forest fraction 0.3 with W = 1, J_F = Jbar = 1: grass sites see
        // rate 0.3; with grass fraction 0.4 a forest site burns at
        // phi(0.4) = 0.5.
        let model = gf_patch(1.0, 0.5);
        let n = 10;
        let states: Vec<StateId> = (0..n).map(|i| if i < 3 { 1 } else { 0 }).collect();
        let sys = SiteSystem::with_states(&model, vec![0.0; n], states, 1).unwrap();
        let grass_rates = transition_rates(&sys, 5).unwrap();
        assert_eq!(grass_rates.len(), 1);
        assert!((grass_rates[0].1 - 0.3).abs() < 1e-12);

        let states2: Vec<StateId> = (0..n).map(|i| if i < 6 { 1 } else { 0 }).collect();
        let sys2 = SiteSystem::with_states(&model, vec![0.0; n], states2, 1).unwrap();
        let forest_rates = transition_rates(&sys2, 0).unwrap();
        assert!((forest_rates[0].1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn all_grass_absorbs_immediately() {
        let model = gf_patch(1.3, 1.0);
        let mut sys = init_state(&model, 50, 9).unwrap();
        assert_eq!(sys.step().unwrap(), StepOutcome::Absorbed);
        assert!(sys.is_absorbed());
        let frozen = sys.states().to_vec();
        for _ in 0..5 {
            assert_eq!(sys.step().unwrap(), StepOutcome::Absorbed);
        }
        assert_eq!(sys.states(), &frozen[..]);
    }

    #[test]
    fn seed_determinism_bit_identical_logs() {
        let model = gf_patch(0.9, 0.6);
        let params = SimParams::new(200, 20.0, 77).snapshots(vec![5.0, 20.0]);
        let a = simulate(&model, &params).unwrap();
        let b = simulate(&model, &params).unwrap();
        assert_eq!(a, b);
        let c = simulate(&model, &SimParams::new(200, 20.0, 78)).unwrap();
        assert_ne!(a.trajectory.events, c.trajectory.events);
    }

    #[test]
    fn waiting_times_exponential_for_constant_rates() {
        // Single site flipping between two states at the same constant
        // rate: inter-event times are iid Exponential(c).
        let c = 2.0;
        let cfg = ModelConfig {
            family: ModelFamily::Generic,
            jbar: 1.0,
            beta: 0.0,
            mu: 0.1,
            nu: 0.05,
            phi: SigmoidParams::phi_default(),
            omega: SigmoidParams::omega_default(),
            domain: Domain::Patches { count: 1 },
            measure: MeasureKind::Discrete { weights: vec![1.0] },
            sigma: None,
            patch_kernels: None,
            init: InitialLaw::Constant { p: vec![1.0, 0.0] },
            assignment: Assignment::Iid,
            generic: Some(GenericModel {
                states: vec!["A".into(), "B".into()],
                absorbing: None,
                transitions: vec![
                    GenericTransition {
                        from: "A".into(),
                        to: "B".into(),
                        rate: RateFn::Constant { c },
                        kernel: None,
                        depends_on: None,
                    },
                    GenericTransition {
                        from: "B".into(),
                        to: "A".into(),
                        rate: RateFn::Constant { c },
                        kernel: None,
                        depends_on: None,
                    },
                ],
            }),
        };
        let model = crate::model::build_model(&cfg).unwrap();
        let mut sys = init_state(&model, 1, 4).unwrap();
        let n = 100_000;
        let mut last = 0.0;
        let mut sum = 0.0;
        for _ in 0..n {
            match sys.step().unwrap() {
                StepOutcome::Event(e) => {
                    sum += e.t - last;
                    last = e.t;
                }
                other => panic!("unexpected {other:?}"),
            }
        }
        let mean = sum / n as f64;
        let tol = 3.0 / (c * (n as f64).sqrt());
        assert!((mean - 1.0 / c).abs() < tol, "mean {mean:.5} vs {:.5}", 1.0 / c);
    }

    #[test]
    fn two_site_event_split_matches_rates() {
        // One grass + one forest site, W = J = 1: total rate is
        // Jbar/2 + phi(1/2), and the first event is G -> F with
        // probability (Jbar/2) / R_tot.
        let model = gf_patch_quota(1.0, 0.5);
        let phi_half = SigmoidParams::phi_default().eval(0.5);
        let p_gf = 0.5 / (0.5 + phi_half);
        let n = 100_000;
        let mut hits = 0usize;
        for seed in 0..n {
            let mut sys = init_state(&model, 2, seed as u64).unwrap();
            let r_tot = sys.total_rate();
            assert!((r_tot - (0.5 + phi_half)).abs() < 1e-12);
            match sys.step().unwrap() {
                StepOutcome::Event(e) => {
                    if e.from == 0 {
                        hits += 1;
                    }
                }
                other => panic!("unexpected {other:?}"),
            }
        }
        let frac = hits as f64 / n as f64;
        let sigma = (p_gf * (1.0 - p_gf) / n as f64).sqrt();
        assert!(
            (frac - p_gf).abs() < 3.0 * sigma,
            "split {frac:.4} vs {p_gf:.4} (3 sigma = {:.4})",
            3.0 * sigma
        );
    }

    #[test]
    fn meso_cache_stays_consistent_over_many_events() {
        let model = ModelSpec::gf_ring(
            1.1,
            0.1,
            5.0,
            SigmoidParams::phi_default(),
            InitialLaw::Constant { p: vec![0.5, 0.5] },
        )
        .unwrap();
        let mut sys = init_state(&model, 150, 21).unwrap();
        let mut events = 0;
        while events < 10_000 {
            match sys.step().unwrap() {
                StepOutcome::Event(_) => events += 1,
                StepOutcome::Absorbed => break,
                StepOutcome::TimeLimit => unreachable!(),
            }
        }
        assert!(events > 5_000, "run too short to stress the caches");
        let err = sys.cache_consistency_error().unwrap();
        assert!(err < 1e-9, "cache drift {err:.2e}");
    }

    #[test]
    fn sampled_rates_never_exceed_stored_bounds() {
        let model = ModelSpec::gf_ring(
            1.25,
            0.05,
            5.0,
            SigmoidParams::phi_default(),
            InitialLaw::Constant { p: vec![0.4, 0.6] },
        )
        .unwrap();
        let bounds = model.bounds().to_vec();
        let trans = model.transitions().to_vec();
        let mut sys = init_state(&model, 120, 13).unwrap();
        for _ in 0..2000 {
            if let StepOutcome::Event(_) = sys.step().unwrap() {
                let i = (sys.time() * 1e6) as usize % 120;
                for (to, r) in sys.site_rates(i) {
                    let ti = trans
                        .iter()
                        .position(|t| t.from == sys.states()[i] && t.to == to)
                        .unwrap();
                    assert!(
                        r <= bounds[ti].rate_sup + 1e-12,
                        "rate {r} exceeds bound {}",
                        bounds[ti].rate_sup
                    );
                }
            } else {
                break;
            }
        }
    }

    #[test]
    fn lazy_rows_match_dense_rows() {
        let model = ModelSpec::gf_ring(
            1.1,
            0.1,
            5.0,
            SigmoidParams::phi_default(),
            InitialLaw::Constant { p: vec![0.5, 0.5] },
        )
        .unwrap();
        let lazy_opts = SsaOptions {
            kernel_budget_bytes: 0,
            cutoff_sigmas: None,
            ..SsaOptions::default()
        };
        let p = SimParams::new(60, 5.0, 17);
        let dense = simulate(&model, &p).unwrap();
        let lazy = simulate_with(&model, &p, &lazy_opts).unwrap();
        assert_eq!(dense.trajectory.events, lazy.trajectory.events);
    }

    #[test]
    fn relabeling_preserves_occupancy_law() {
        // Exchangeability at the law level on a single patch: reversing
        // the site labels of the initial configuration leaves the
        // occupancy statistics unchanged across seeds.
        let model = gf_patch(0.9, 0.5);
        let n = 50;
        let t = 4.0;
        let seeds = 1000u64;
        let mut orig = Vec::new();
        let mut perm = Vec::new();
        for seed in 0..seeds {
            let sys = init_state(&model, n, seed).unwrap();
            let positions = sys.positions().to_vec();
            let states = sys.states().to_vec();
            let mut reversed = states.clone();
            reversed.reverse();
            for (start, out) in [(states, &mut orig), (reversed, &mut perm)] {
                let mut s = SiteSystem::with_states(&model, positions.clone(), start, seed ^ 0xabcd)
                    .unwrap();
                while let StepOutcome::Event(_) = s.step_until(t).unwrap() {}
                out.push(s.occupancy_now()[1]);
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
        let (m1, m2) = (mean(&orig), mean(&perm));
        let (v1, v2) = (var(&orig, m1), var(&perm, m2));
        let se = ((v1 + v2) / seeds as f64).sqrt();
        assert!((m1 - m2).abs() < 4.0 * se, "means {m1:.4} vs {m2:.4}");
        assert!(v1 / v2 < 1.4 && v2 / v1 < 1.4, "variances {v1:.5} vs {v2:.5}");
    }

    #[test]
    fn event_cap_is_an_explicit_error() {
        let model = gf_patch(1.1, 0.5);
        let mut p = SimParams::new(100, 50.0, 3);
        p.event_cap = 10;
        match simulate(&model, &p) {
            Err(Error::EventCapExceeded { cap: 10, .. }) => {}
            other => panic!("expected event-cap error, got {other:?}"),
        }
    }

    #[test]
    fn zero_time_simulation_is_empty() {
        let model = gf_patch(1.1, 0.5);
        let out = simulate(&model, &SimParams::new(1, 0.0, 2)).unwrap();
        assert!(out.trajectory.events.is_empty());
    }

    #[test]
    fn quota_assignment_gives_exact_counts() {
        let model = gf_patch_quota(1.0, 0.3);
        let sys = init_state(&model, 10, 8).unwrap();
        let grass = sys.states().iter().filter(|s| **s == 0).count();
        assert_eq!(grass, 3);
    }

    #[test]
    fn subcritical_forest_goes_extinct_quickly() {
        // Below the first saddle-node the forest dies out well before
        // t = 1e4; t = 200 is already generous.
        let model = gf_patch(0.3, 0.5);
        let mut absorbed = 0;
        for seed in 0..5u64 {
            let out = simulate(&model, &SimParams::new(500, 200.0, seed)).unwrap();
            if out.trajectory.absorbed.is_some() {
                absorbed += 1;
            }
        }
        assert!(absorbed >= 4, "only {absorbed}/5 runs absorbed by t = 200");
    }

    #[test]
    fn event_log_is_strictly_increasing_with_real_flips() {
        let model = gf_patch(0.9, 0.6);
        let out = simulate(&model, &SimParams::new(300, 10.0, 4)).unwrap();
        assert!(out.trajectory.events.len() > 50);
        let mut prev = 0.0;
        for e in &out.trajectory.events {
            assert!(e.t > prev, "event times must strictly increase");
            assert_ne!(e.from, e.to);
            prev = e.t;
        }
    }

    #[test]
    fn block_initial_condition_fills_bins() {
        // A block of forest on [1, 2.5] of the ring: binned occupancy at
        // t = 0 is pure forest inside and pure grass outside.
        let model = ModelSpec::gf_ring(
            1.0,
            0.05,
            5.0,
            SigmoidParams::phi_default(),
            InitialLaw::Blocks {
                default: vec![1.0, 0.0],
                blocks: vec![crate::model::InitBlock {
                    from: 1.0,
                    to: 2.5,
                    p: vec![0.0, 1.0],
                }],
            },
        )
        .unwrap();
        let out = simulate(&model, &SimParams::new(2000, 0.0, 12).snapshots(vec![0.0])).unwrap();
        let edges: Vec<f64> = (0..=20).map(|k| k as f64 * 0.25).collect();
        let occ = out.trajectory.occupancy(&[0.0], Some(&edges)).unwrap();
        for (b, val) in occ.values[0].iter().enumerate() {
            let (lo, hi) = (edges[b], edges[b + 1]);
            if let Some(f) = val {
                if lo >= 1.0 && hi <= 2.5 {
                    assert_eq!(f[1], 1.0, "bin [{lo},{hi}) should be all forest");
                } else if hi <= 1.0 || lo >= 2.5 {
                    assert_eq!(f[1], 0.0, "bin [{lo},{hi}) should be all grass");
                }
            }
        }
    }
}

