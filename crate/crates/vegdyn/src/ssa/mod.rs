//! Exact event-driven (Gillespie direct method) simulation of the N-site
//! Markov jump process with kernel-weighted rates.
//!
//! Two engines sit behind [`SiteSystem`]:
//!
//! * patch domains aggregate sites into (patch, state) classes, giving
//!   O(M^2) work per event regardless of N;
//! * continuum domains keep per-site field caches `(1/N) sum_j W(r_i, r_j)
//!   1{X_j = psi}` which every event perturbs, giving O(N * #kernels) work
//!   per event (a dependency-graph method would degenerate here, so the
//!   direct method is used).

mod system;
mod trajectory;

pub use system::{
    init_state, init_state_with, simulate, simulate_with, transition_rates, SimParams,
    SiteSystem, SsaOptions, StepOutcome,
};
pub use trajectory::{Event, OccupancySeries, SimOutput, Trajectory};
