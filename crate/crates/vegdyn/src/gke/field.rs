//! Simplex-valued probability fields on a grid.

use crate::error::{Error, Result};
use crate::gke::Grid;
use crate::model::{InitialLaw, ModelSpec};

/// Per-node probability vector over the K states, node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityField {
    n_nodes: usize,
    n_states: usize,
    data: Vec<f64>,
}

impl ProbabilityField {
    pub fn new(n_nodes: usize, n_states: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_nodes * n_states {
            return Err(Error::LengthMismatch {
                expected: n_nodes * n_states,
                got: data.len(),
            });
        }
        let f = Self {
            n_nodes,
            n_states,
            data,
        };
        f.check_simplex(1e-10)?;
        Ok(f)
    }

    /// Same probability vector at every node.
    pub fn constant(p: &[f64], n_nodes: usize) -> Result<Self> {
        Self::new(n_nodes, p.len(), p.repeat(n_nodes))
    }

    /// Evaluate a model's initial law on the grid nodes.
    pub fn from_initial_law(model: &ModelSpec, grid: &Grid) -> Result<Self> {
        let k = model.n_states();
        let mut data = Vec::with_capacity(grid.len() * k);
        for x in grid.nodes() {
            data.extend_from_slice(model.initial_law().at(*x));
        }
        Self::new(grid.len(), k, data)
    }

    pub fn from_law(law: &InitialLaw, grid: &Grid, n_states: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(grid.len() * n_states);
        for x in grid.nodes() {
            data.extend_from_slice(law.at(*x));
        }
        Self::new(grid.len(), n_states, data)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn node(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_states..(i + 1) * self.n_states]
    }

    #[inline]
    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_states..(i + 1) * self.n_states]
    }

    /// Values of one state across all nodes.
    pub fn state_values(&self, state: usize) -> Vec<f64> {
        (0..self.n_nodes)
            .map(|i| self.data[i * self.n_states + state])
            .collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Largest deviation of any node's probability sum from 1.
    pub fn max_sum_deviation(&self) -> f64 {
        (0..self.n_nodes)
            .map(|i| (self.node(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn check_simplex(&self, tol: f64) -> Result<()> {
        for i in 0..self.n_nodes {
            let p = self.node(i);
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("probability field node {i}"),
                });
            }
            if let Some(v) = p.iter().find(|v| **v < -tol) {
                return Err(Error::InvalidInput(format!(
                    "negative probability {v} at node {i}"
                )));
            }
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > tol.max(1e-10) {
                return Err(Error::InvalidInput(format!(
                    "node {i} probabilities sum to {s}"
                )));
            }
        }
        Ok(())
    }
}
