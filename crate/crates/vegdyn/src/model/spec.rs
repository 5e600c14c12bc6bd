//! Model assembly and validation.

use crate::error::{Error, Result};
use crate::model::{Domain, Kernel, KernelKind, MeasureKind, SigmoidParams, SiteMeasure, StateId};
use serde::{Deserialize, Serialize};

/// Ordered set of K state labels, e.g. G,S,T,F.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSet {
    labels: Vec<String>,
    /// Label of a state whose uniform configuration is known absorbing
    /// (all-grass for the built-in families).
    absorbing_hint: Option<StateId>,
}

impl StateSet {
    pub fn new<S: Into<String>>(labels: Vec<S>, absorbing: Option<&str>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a state set needs at least 2 states, got {}",
                labels.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidInput(format!("duplicate state label {l:?}")));
            }
        }
        let absorbing_hint = match absorbing {
            None => None,
            Some(a) => Some(
                labels
                    .iter()
                    .position(|l| l == a)
                    .ok_or_else(|| Error::InvalidInput(format!("absorbing label {a:?} unknown")))?,
            ),
        };
        Ok(Self {
            labels,
            absorbing_hint,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, id: StateId) -> &str {
        &self.labels[id]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<StateId> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn absorbing_hint(&self) -> Option<StateId> {
        self.absorbing_hint
    }
}

/// The nonlinearity applied to a kernel-weighted field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RateFn {
    /// State-independent rate `c`.
    Constant { c: f64 },
    /// Identity in the field (seed-dispersal recruitment).
    Linear,
    /// Sigmoid of the field (fire mortality, delayed maturation).
    Sigmoid(SigmoidParams),
}

impl RateFn {
    #[inline]
    pub fn eval(&self, field: f64) -> f64 {
        match self {
            RateFn::Constant { c } => *c,
            RateFn::Linear => field,
            RateFn::Sigmoid(p) => p.eval(field),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, RateFn::Constant { .. })
    }

    /// Sup of the rate over fields in `[0, field_sup]`.
    pub fn sup_on(&self, field_sup: f64) -> f64 {
        match self {
            RateFn::Constant { c } => *c,
            RateFn::Linear => field_sup,
            // The sigmoid clamps its argument to [0, 1] and is monotone.
            RateFn::Sigmoid(p) => p.eval(0.0).max(p.eval(field_sup.min(1.0))),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            RateFn::Constant { .. } => 0.0,
            RateFn::Linear => 1.0,
            RateFn::Sigmoid(p) => p.lipschitz(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            RateFn::Constant { c } if !(c.is_finite() && *c >= 0.0) => Err(Error::InvalidInput(
                format!("constant rate must be finite and nonnegative, got {c}"),
            )),
            RateFn::Sigmoid(p) => p.validate(),
            _ => Ok(()),
        }
    }
}

/// One transition `from -> to` with its rate law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSpec {
    pub from: StateId,
    pub to: StateId,
    pub rate: RateFn,
    /// Interaction kernel weighting the dependency state; `None` exactly
    /// when the rate is constant.
    pub kernel: Option<Kernel>,
    /// The state this transition's rate depends on (the psi map); `None`
    /// exactly when the rate is constant.
    pub depends_on: Option<StateId>,
}

/// Precomputed bounds stored with each transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionBounds {
    /// `||W||_inf` of the kernel (0 for constant rates).
    pub kernel_sup: f64,
    /// `||Phi||_inf` over achievable fields; every sampled rate obeys it.
    pub rate_sup: f64,
    /// Lipschitz constant of the rate function.
    pub lipschitz: f64,
}

/// Per-location law of the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialLaw {
    /// Same probability vector at every location.
    Constant { p: Vec<f64> },
    /// Piecewise constant in space: `p` applies on [from, to), the default
    /// elsewhere.
    Blocks {
        default: Vec<f64>,
        blocks: Vec<InitBlock>,
    },
    /// One probability vector per patch.
    PerPatch { p: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitBlock {
    pub from: f64,
    pub to: f64,
    pub p: Vec<f64>,
}

impl InitialLaw {
    pub fn at(&self, x: f64) -> &[f64] {
        match self {
            InitialLaw::Constant { p } => p,
            InitialLaw::Blocks { default, blocks } => blocks
                .iter()
                .find(|b| x >= b.from && x < b.to)
                .map(|b| b.p.as_slice())
                .unwrap_or(default),
            InitialLaw::PerPatch { p } => &p[x.round() as usize],
        }
    }

    fn validate(&self, n_states: usize, measure: &SiteMeasure, issues: &mut Vec<String>) {
        fn check(issues: &mut Vec<String>, n_states: usize, name: &str, p: &[f64]) {
            if p.len() != n_states {
                issues.push(format!(
                    "initial law {name}: {} entries for {} states",
                    p.len(),
                    n_states
                ));
                return;
            }
            if p.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                issues.push(format!("initial law {name}: negative or non-finite entry"));
            }
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                issues.push(format!("initial law {name}: sums to {s}, expected 1"));
            }
        }
        match self {
            InitialLaw::Constant { p } => check(issues, n_states, "constant", p),
            InitialLaw::Blocks { default, blocks } => {
                check(issues, n_states, "default", default);
                for (i, b) in blocks.iter().enumerate() {
                    check(issues, n_states, &format!("block {i}"), &b.p);
                    if !(b.from < b.to) {
                        issues.push(format!("initial law block {i}: empty interval"));
                    }
                }
            }
            InitialLaw::PerPatch { p } => {
                let m = match measure.domain {
                    Domain::Patches { count } => count,
                    _ => {
                        issues.push("per-patch initial law on a continuum domain".into());
                        return;
                    }
                };
                if p.len() != m {
                    issues.push(format!(
                        "per-patch initial law: {} rows for {} patches",
                        p.len(),
                        m
                    ));
                    return;
                }
                for (k, row) in p.iter().enumerate() {
                    check(issues, n_states, &format!("patch {k}"), row);
                }
            }
        }
    }
}

/// How initial states are assigned to sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    /// Independently per site from the law at the site's location.
    #[default]
    Iid,
    /// Exact per-state counts (largest remainder), shuffled over sites.
    /// Only meaningful with a spatially constant law.
    Quota,
}

/// Immutable, validated description of a K-state model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    states: StateSet,
    transitions: Vec<TransitionSpec>,
    bounds: Vec<TransitionBounds>,
    by_from: Vec<Vec<usize>>,
    measure: SiteMeasure,
    initial_law: InitialLaw,
    assignment: Assignment,
}

impl ModelSpec {
    pub fn build(
        states: StateSet,
        transitions: Vec<TransitionSpec>,
        measure: SiteMeasure,
        initial_law: InitialLaw,
        assignment: Assignment,
    ) -> Result<Self> {
        let mut issues = Vec::new();
        let k = states.len();

        if let Err(e) = measure.validate() {
            issues.push(e.to_string());
        }
        initial_law.validate(k, &measure, &mut issues);

        for (i, t) in transitions.iter().enumerate() {
            let tag = format!(
                "transition {i} ({} -> {})",
                states
                    .labels()
                    .get(t.from)
                    .map(String::as_str)
                    .unwrap_or("?"),
                states.labels().get(t.to).map(String::as_str).unwrap_or("?")
            );
            if t.from >= k || t.to >= k {
                issues.push(format!("{tag}: unknown state index"));
                continue;
            }
            if t.from == t.to {
                issues.push(format!("{tag}: from == to"));
            }
            if let Some(d) = t.depends_on {
                if d >= k {
                    issues.push(format!("{tag}: unknown dependency state index {d}"));
                }
            }
            if let Err(e) = t.rate.validate() {
                issues.push(format!("{tag}: {e}"));
            }
            match (&t.depends_on, &t.kernel, t.rate.is_constant()) {
                (None, _, false) => {
                    issues.push(format!("{tag}: field-dependent rate without a dependency state"))
                }
                (Some(_), None, _) => {
                    issues.push(format!("{tag}: missing kernel for field-dependent transition"))
                }
                (Some(_), _, true) => {
                    issues.push(format!("{tag}: constant rate must not declare a dependency"))
                }
                _ => {}
            }
            if let Some(kern) = &t.kernel {
                if let Err(e) = kern.validate() {
                    issues.push(format!("{tag}: {e}"));
                }
            }
            for (j, other) in transitions[..i].iter().enumerate() {
                if other.from == t.from && other.to == t.to {
                    issues.push(format!("{tag}: duplicate of transition {j}"));
                }
            }
        }

        if !issues.is_empty() {
            return Err(Error::Validation { issues });
        }

        let bounds = transitions
            .iter()
            .map(|t| {
                let kernel_sup = t.kernel.as_ref().map(Kernel::sup).unwrap_or(0.0);
                TransitionBounds {
                    kernel_sup,
                    rate_sup: t.rate.sup_on(kernel_sup),
                    lipschitz: t.rate.lipschitz(),
                }
            })
            .collect();

        let mut by_from = vec![Vec::new(); k];
        for (i, t) in transitions.iter().enumerate() {
            by_from[t.from].push(i);
        }

        Ok(Self {
            states,
            transitions,
            bounds,
            by_from,
            measure,
            initial_law,
            assignment,
        })
    }

    pub fn states(&self) -> &StateSet {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn transitions(&self) -> &[TransitionSpec] {
        &self.transitions
    }

    pub fn bounds(&self) -> &[TransitionBounds] {
        &self.bounds
    }

    /// Indices of the transitions leaving `state`.
    pub fn transitions_from(&self, state: StateId) -> &[usize] {
        &self.by_from[state]
    }

    pub fn measure(&self) -> &SiteMeasure {
        &self.measure
    }

    pub fn domain(&self) -> Domain {
        self.measure.domain
    }

    pub fn initial_law(&self) -> &InitialLaw {
        &self.initial_law
    }

    pub fn assignment(&self) -> Assignment {
        self.assignment
    }

    pub fn is_patch_model(&self) -> bool {
        matches!(self.measure.domain, Domain::Patches { .. })
    }

    /// Distinct kernel shapes (amplitude stripped) paired with, per
    /// transition, the shape index and amplitude. Field caches are keyed by
    /// (shape, dependency) so J = Jbar * W shares one set of rows with W.
    pub fn kernel_shapes(&self) -> (Vec<KernelKind>, Vec<Option<(usize, f64)>>) {
        let mut shapes: Vec<KernelKind> = Vec::new();
        let refs = self
            .transitions
            .iter()
            .map(|t| {
                t.kernel.as_ref().map(|k| {
                    let idx = shapes
                        .iter()
                        .position(|s| *s == k.kind)
                        .unwrap_or_else(|| {
                            shapes.push(k.kind.clone());
                            shapes.len() - 1
                        });
                    (idx, k.amplitude)
                })
            })
            .collect();
        (shapes, refs)
    }
}

// ---------------------------------------------------------------------------
// Built-in families and raw-configuration assembly.
// ---------------------------------------------------------------------------

/// Constant-rate and sigmoid parameters of the four-species model,
/// defaulting to the appendix table (mu = 0.1, nu = 0.05 and the phi/omega
/// sigmoids).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GstfParams {
    pub mu: f64,
    pub nu: f64,
    pub phi: SigmoidParams,
    pub omega: SigmoidParams,
}

impl Default for GstfParams {
    fn default() -> Self {
        Self {
            mu: 0.1,
            nu: 0.05,
            phi: SigmoidParams::phi_default(),
            omega: SigmoidParams::omega_default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Gf,
    Gstf,
    Generic,
}

/// Raw configuration from which [`build_model`] assembles a validated
/// [`ModelSpec`]. This is the `model` section of the experiment JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: ModelFamily,
    #[serde(default = "one")]
    pub jbar: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "SigmoidParams::phi_default")]
    pub phi: SigmoidParams,
    #[serde(default = "SigmoidParams::omega_default")]
    pub omega: SigmoidParams,
    pub domain: Domain,
    pub measure: MeasureKind,
    /// Kernel width for continuum domains.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Explicit patch-to-patch weight matrices (row-major); identity-free
    /// all-ones when omitted.
    #[serde(default)]
    pub patch_kernels: Option<PatchKernels>,
    pub init: InitialLaw,
    #[serde(default)]
    pub assignment: Assignment,
    /// Full transition table for the generic family.
    #[serde(default)]
    pub generic: Option<GenericModel>,
}

fn one() -> f64 {
    1.0
}
fn default_mu() -> f64 {
    0.1
}
fn default_nu() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchKernels {
    #[serde(default)]
    pub w: Option<Vec<f64>>,
    #[serde(default)]
    pub js: Option<Vec<f64>>,
    #[serde(default)]
    pub jf: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericModel {
    pub states: Vec<String>,
    #[serde(default)]
    pub absorbing: Option<String>,
    pub transitions: Vec<GenericTransition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericTransition {
    pub from: String,
    pub to: String,
    pub rate: RateFn,
    /// Which of the three named kernels carries this transition's field.
    #[serde(default)]
    pub kernel: Option<KernelRole>,
    #[serde(default)]
    pub depends_on: Option<String>,
}

/// The three kernel roles of the model family: fire (amplitude 1), savanna
/// seed dispersal (amplitude beta), forest seed dispersal (amplitude Jbar).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelRole {
    W,
    Js,
    Jf,
}

struct KernelSet {
    w: Kernel,
    js: Kernel,
    jf: Kernel,
}

fn resolve_kernels(cfg: &ModelConfig) -> Result<KernelSet> {
    let shape_for = |entries: &Option<Vec<f64>>, m: usize| -> Result<KernelKind> {
        let e = entries.clone().unwrap_or_else(|| vec![1.0; m * m]);
        if e.len() != m * m {
            return Err(Error::LengthMismatch {
                expected: m * m,
                got: e.len(),
            });
        }
        Ok(KernelKind::PatchMatrix { m, entries: e })
    };
    match cfg.domain {
        Domain::Ring { length } => {
            let sigma = cfg
                .sigma
                .ok_or_else(|| Error::Config("ring domain requires kernel sigma".into()))?;
            let shape = KernelKind::GaussianRing { sigma, length };
            Ok(KernelSet {
                w: Kernel::new(shape.clone(), 1.0)?,
                js: Kernel::new(shape.clone(), cfg.beta)?,
                jf: Kernel::new(shape, cfg.jbar)?,
            })
        }
        Domain::Interval { .. } => {
            let sigma = cfg
                .sigma
                .ok_or_else(|| Error::Config("interval domain requires kernel sigma".into()))?;
            let shape = KernelKind::GaussianLine { sigma };
            Ok(KernelSet {
                w: Kernel::new(shape.clone(), 1.0)?,
                js: Kernel::new(shape.clone(), cfg.beta)?,
                jf: Kernel::new(shape, cfg.jbar)?,
            })
        }
        Domain::Patches { count } => {
            let pk = cfg.patch_kernels.clone().unwrap_or(PatchKernels {
                w: None,
                js: None,
                jf: None,
            });
            Ok(KernelSet {
                w: Kernel::new(shape_for(&pk.w, count)?, 1.0)?,
                js: Kernel::new(shape_for(&pk.js, count)?, cfg.beta)?,
                jf: Kernel::new(shape_for(&pk.jf, count)?, cfg.jbar)?,
            })
        }
    }
}

/// Assemble and validate a model from raw configuration.
///
/// Pure: identical configurations yield structurally identical specs.
pub fn build_model(cfg: &ModelConfig) -> Result<ModelSpec> {
    let measure = SiteMeasure {
        domain: cfg.domain,
        kind: cfg.measure.clone(),
    };
    let kernels = resolve_kernels(cfg)?;

    match cfg.family {
        ModelFamily::Gf => {
            let states = StateSet::new(vec!["G", "F"], Some("G"))?;
            let (g, f) = (0, 1);
            let transitions = vec![
                TransitionSpec {
                    from: g,
                    to: f,
                    rate: RateFn::Linear,
                    kernel: Some(kernels.jf),
                    depends_on: Some(f),
                },
                TransitionSpec {
                    from: f,
                    to: g,
                    rate: RateFn::Sigmoid(cfg.phi),
                    kernel: Some(kernels.w),
                    depends_on: Some(g),
                },
            ];
            ModelSpec::build(states, transitions, measure, cfg.init.clone(), cfg.assignment)
        }
        ModelFamily::Gstf => {
            let states = StateSet::new(vec!["G", "S", "T", "F"], Some("G"))?;
            let (g, s, t, f) = (0, 1, 2, 3);
            // The six rate rows of the transition table; the recruitment row
            // G,S,T -> F expands to three ordered pairs sharing one law.
            let mut transitions = vec![TransitionSpec {
                from: g,
                to: s,
                rate: RateFn::Linear,
                kernel: Some(kernels.js),
                depends_on: Some(t),
            }];
            for from in [g, s, t] {
                transitions.push(TransitionSpec {
                    from,
                    to: f,
                    rate: RateFn::Linear,
                    kernel: Some(kernels.jf.clone()),
                    depends_on: Some(f),
                });
            }
            transitions.extend([
                TransitionSpec {
                    from: f,
                    to: g,
                    rate: RateFn::Sigmoid(cfg.phi),
                    kernel: Some(kernels.w.clone()),
                    depends_on: Some(g),
                },
                TransitionSpec {
                    from: s,
                    to: t,
                    rate: RateFn::Sigmoid(cfg.omega),
                    kernel: Some(kernels.w),
                    depends_on: Some(g),
                },
                TransitionSpec {
                    from: s,
                    to: g,
                    rate: RateFn::Constant { c: cfg.mu },
                    kernel: None,
                    depends_on: None,
                },
                TransitionSpec {
                    from: t,
                    to: g,
                    rate: RateFn::Constant { c: cfg.nu },
                    kernel: None,
                    depends_on: None,
                },
            ]);
            ModelSpec::build(states, transitions, measure, cfg.init.clone(), cfg.assignment)
        }
        ModelFamily::Generic => {
            let gm = cfg
                .generic
                .as_ref()
                .ok_or_else(|| Error::Config("generic family requires a transition table".into()))?;
            let states = StateSet::new(gm.states.clone(), gm.absorbing.as_deref())?;
            let lookup = |label: &str| {
                states
                    .index_of(label)
                    .ok_or_else(|| Error::Config(format!("unknown state label {label:?}")))
            };
            let transitions = gm
                .transitions
                .iter()
                .map(|t| {
                    Ok(TransitionSpec {
                        from: lookup(&t.from)?,
                        to: lookup(&t.to)?,
                        rate: t.rate.clone(),
                        kernel: t.kernel.map(|role| match role {
                            KernelRole::W => kernels.w.clone(),
                            KernelRole::Js => kernels.js.clone(),
                            KernelRole::Jf => kernels.jf.clone(),
                        }),
                        depends_on: t.depends_on.as_deref().map(lookup).transpose()?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            ModelSpec::build(states, transitions, measure, cfg.init.clone(), cfg.assignment)
        }
    }
}

// Convenience constructors used throughout the tests and analyses.
impl ModelSpec {
    /// Two-state grass/forest model on a single patch: W(1,1) = 1,
    /// J_F(1,1) = Jbar.
    pub fn gf_single_patch(jbar: f64, phi: SigmoidParams, init_grass: f64) -> Result<Self> {
        build_model(&ModelConfig {
            family: ModelFamily::Gf,
            jbar,
            beta: 0.0,
            mu: 0.1,
            nu: 0.05,
            phi,
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
        })
    }

    /// Four-species model on a single patch with W = 1, J_F = Jbar,
    /// J_S = beta.
    pub fn gstf_single_patch(
        jbar: f64,
        beta: f64,
        params: &GstfParams,
        init: [f64; 4],
    ) -> Result<Self> {
        build_model(&ModelConfig {
            family: ModelFamily::Gstf,
            jbar,
            beta,
            mu: params.mu,
            nu: params.nu,
            phi: params.phi,
            omega: params.omega,
            domain: Domain::Patches { count: 1 },
            measure: MeasureKind::Discrete { weights: vec![1.0] },
            sigma: None,
            patch_kernels: None,
            init: InitialLaw::Constant { p: init.to_vec() },
            assignment: Assignment::Iid,
            generic: None,
        })
    }

    /// Grass/forest model on a uniform ring with Gaussian kernels.
    pub fn gf_ring(
        jbar: f64,
        sigma: f64,
        length: f64,
        phi: SigmoidParams,
        init: InitialLaw,
    ) -> Result<Self> {
        build_model(&ModelConfig {
            family: ModelFamily::Gf,
            jbar,
            beta: 0.0,
            mu: 0.1,
            nu: 0.05,
            phi,
            omega: SigmoidParams::omega_default(),
            domain: Domain::Ring { length },
            measure: MeasureKind::Uniform,
            sigma: Some(sigma),
            patch_kernels: None,
            init,
            assignment: Assignment::Iid,
            generic: None,
        })
    }

    /// Grass/forest model on [0, L] with trapezoid site density and
    /// convolution Gaussian kernels (reflecting boundary handled by the
    /// grid).
    pub fn gf_interval_trapezoid(
        jbar: f64,
        sigma: f64,
        a: f64,
        b: f64,
        length: f64,
        phi: SigmoidParams,
        init: InitialLaw,
    ) -> Result<Self> {
        build_model(&ModelConfig {
            family: ModelFamily::Gf,
            jbar,
            beta: 0.0,
            mu: 0.1,
            nu: 0.05,
            phi,
            omega: SigmoidParams::omega_default(),
            domain: Domain::Interval { length },
            measure: MeasureKind::Trapezoid { a, b },
            sigma: Some(sigma),
            patch_kernels: None,
            init,
            assignment: Assignment::Iid,
            generic: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gstf() -> ModelSpec {
        ModelSpec::gstf_single_patch(0.25, 0.4, &GstfParams::default(), [0.25; 4]).unwrap()
    }

    #[test]
    fn gstf_table_rows() {
        let m = gstf();
        let s = m.states();
        // Table rows: G->S, {G,S,T}->F, F->G, S->T, S->G, T->G.
        let pairs: Vec<(&str, &str)> = m
            .transitions()
            .iter()
            .map(|t| (s.label(t.from), s.label(t.to)))
            .collect();
        let expected = [
            ("G", "S"),
            ("G", "F"),
            ("S", "F"),
            ("T", "F"),
            ("F", "G"),
            ("S", "T"),
            ("S", "G"),
            ("T", "G"),
        ];
        assert_eq!(pairs.len(), 8);
        for e in expected {
            assert!(pairs.contains(&e), "missing {e:?}");
        }
        // Six distinct rate rows: the three recruitment pairs share one law.
        let mut laws: Vec<(&RateFn, &Option<Kernel>, &Option<usize>)> = Vec::new();
        for t in m.transitions() {
            let key = (&t.rate, &t.kernel, &t.depends_on);
            if !laws.contains(&key) {
                laws.push(key);
            }
        }
        assert_eq!(laws.len(), 6);
    }

    #[test]
    fn gstf_constant_rates_follow_table_one() {
        // S -> G at mu, T -> G at nu.
        let m = gstf();
        let s = m.states();
        for t in m.transitions() {
            match (s.label(t.from), s.label(t.to)) {
                ("S", "G") => assert_eq!(t.rate, RateFn::Constant { c: 0.1 }),
                ("T", "G") => assert_eq!(t.rate, RateFn::Constant { c: 0.05 }),
                _ => {}
            }
        }
    }

    #[test]
    fn gf_single_patch_matches_two_state_chain() {
        let m = ModelSpec::gf_single_patch(1.0, SigmoidParams::phi_default(), 0.5).unwrap();
        assert_eq!(m.transitions().len(), 2);
        let g = m.states().index_of("G").unwrap();
        let f = m.states().index_of("F").unwrap();
        let gf = &m.transitions()[m.transitions_from(g)[0]];
        assert_eq!(gf.depends_on, Some(f));
        assert_eq!(gf.rate, RateFn::Linear);
        assert_eq!(gf.kernel.as_ref().unwrap().amplitude, 1.0);
        let fg = &m.transitions()[m.transitions_from(f)[0]];
        assert_eq!(fg.depends_on, Some(g));
        assert!(matches!(fg.rate, RateFn::Sigmoid(_)));
    }

    #[test]
    fn zero_slope_rejected() {
        let mut p = GstfParams::default();
        p.omega.slope = 0.0;
        let err = ModelSpec::gstf_single_patch(0.25, 0.4, &p, [0.25; 4]).unwrap_err();
        assert!(matches!(err, Error::Validation { .. }), "got {err}");
    }

    #[test]
    fn validation_lists_all_offenders() {
        let states = StateSet::new(vec!["G", "F"], Some("G")).unwrap();
        let bad = vec![
            TransitionSpec {
                from: 0,
                to: 1,
                rate: RateFn::Linear,
                kernel: None, // missing kernel
                depends_on: Some(1),
            },
            TransitionSpec {
                from: 1,
                to: 0,
                rate: RateFn::Constant { c: -0.2 }, // negative rate
                kernel: None,
                depends_on: None,
            },
            TransitionSpec {
                from: 0,
                to: 1, // duplicate pair
                rate: RateFn::Constant { c: 0.1 },
                kernel: None,
                depends_on: None,
            },
        ];
        let err = ModelSpec::build(
            states,
            bad,
            SiteMeasure::discrete(vec![1.0]).unwrap(),
            InitialLaw::Constant { p: vec![1.0, 0.0] },
            Assignment::Iid,
        )
        .unwrap_err();
        match err {
            Error::Validation { issues } => {
                assert!(issues.iter().any(|i| i.contains("missing kernel")));
                assert!(issues.iter().any(|i| i.contains("nonnegative")));
                assert!(issues.iter().any(|i| i.contains("duplicate")));
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn build_is_pure() {
        let a = gstf();
        let b = gstf();
        assert_eq!(a, b);
    }

    #[test]
    fn kernel_shapes_dedup_w_and_jf() {
        let m = ModelSpec::gf_ring(
            1.25,
            0.05,
            5.0,
            SigmoidParams::phi_default(),
            InitialLaw::Constant { p: vec![0.7, 0.3] },
        )
        .unwrap();
        let (shapes, refs) = m.kernel_shapes();
        assert_eq!(shapes.len(), 1, "J and W share the ring Gaussian shape");
        let amps: Vec<f64> = refs.iter().flatten().map(|(_, a)| *a).collect();
        assert!(amps.contains(&1.0) && amps.contains(&1.25));
    }

    #[test]
    fn rate_sup_bounds() {
        let m = gstf();
        for (t, b) in m.transitions().iter().zip(m.bounds()) {
            match &t.rate {
                RateFn::Constant { c } => assert_eq!(b.rate_sup, *c),
                RateFn::Linear => assert_eq!(b.rate_sup, b.kernel_sup),
                RateFn::Sigmoid(p) => assert!((b.rate_sup - p.sup()).abs() < 1e-15),
            }
        }
    }

    #[test]
    fn initial_law_blocks_lookup() {
        let law = InitialLaw::Blocks {
            default: vec![1.0, 0.0],
            blocks: vec![InitBlock {
                from: 1.0,
                to: 2.5,
                p: vec![0.0, 1.0],
            }],
        };
        assert_eq!(law.at(0.5), &[1.0, 0.0]);
        assert_eq!(law.at(1.7), &[0.0, 1.0]);
        assert_eq!(law.at(2.5), &[1.0, 0.0]);
    }
}
