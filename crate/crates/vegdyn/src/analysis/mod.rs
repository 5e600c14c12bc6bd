//! Scientific diagnostics: equilibrium and bifurcation sweeps of the
//! two-state system, mean-field convergence studies, pairwise-independence
//! tests, front tracking, wave speeds, and period estimation.

mod equilibria;
mod fronts;
mod period;
mod study;

pub use equilibria::{
    bifurcation_sweep, equilibria_2state, BifurcationDiagram, BranchKind, EquilibriumPoint,
    Stability,
};
pub use fronts::{front_position, wave_speed};
pub use period::{estimate_period, moving_average, PeriodEstimate};
pub use study::{
    convergence_study, correlation_from_states, pairwise_correlation, ConvergenceStudy,
    CorrelationReport, StudyOptions,
};
