// Guards written as `!(x > 0.0)` deliberately treat NaN as invalid, and
// the kernel-matrix code indexes rows and columns directly.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

//! Simulation and numerical analysis of spatially extended K-state
//! stochastic vegetation models (grass, savanna sapling and tree, forest
//! tree) with kernel-weighted seed dispersal and fire spread.
//!
//! The toolkit has four legs that check each other:
//!
//! * [`ssa`] — exact event-driven (Gillespie) simulation of the finite-size
//!   N-site Markov jump process with nonlocal kernel-weighted rates.
//! * [`gke`] — deterministic solvers for the generalized Kolmogorov
//!   equations of the mean-field limit: ODE systems on patches, nonlocal
//!   integro-differential equations on rings and intervals.
//! * [`meanfield`] — simulation of the limiting single-site jump process by
//!   thinning against a precomputed solution of the equations above.
//! * [`qsd`] — quasi-stationary distributions and absorption rates of the
//!   two-state single-patch chain via its tridiagonal restricted generator.
//!
//! [`analysis`] layers scientific diagnostics on top (equilibria and
//! bifurcation sweeps, convergence studies, front tracking, period
//! estimation), and [`cli`] is the experiment runner behind the `vegdyn`
//! binary.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod gke;
pub mod meanfield;
pub mod model;
pub mod qsd;
pub mod rng;
pub mod ssa;

pub use error::{Error, Result};
