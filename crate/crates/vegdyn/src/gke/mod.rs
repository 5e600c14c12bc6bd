//! Deterministic solvers for the generalized Kolmogorov equations of the
//! mean-field limit: nonlinear ODE systems on patch sets, nonlocal
//! integro-differential equations on rings (periodic) and intervals
//! (reflecting), discretized by trapezoidal quadrature in space and explicit
//! Euler in time.

mod field;
mod grid;
mod solver;

pub use field::ProbabilityField;
pub use grid::{make_grid, quadrature, Boundary, Grid};
pub use solver::{
    integrate, integrate_dense, integrate_with, rhs, DenseSolution, FieldSeries, GkeSolver,
};
