//! Spatial discretization: nodes, quadrature weights against the site
//! measure, and kernel matrices.

use crate::error::{Error, Result};
use crate::model::{Domain, Kernel, KernelKind, MeasureKind, SiteMeasure};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    Reflecting,
    /// Patch sets have no boundary notion.
    None,
}

/// Quadrature grid: `sum_k weights[k] * f(nodes[k])` approximates the
/// integral of `f` against the site measure `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    domain: Domain,
    boundary: Boundary,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    measure: SiteMeasure,
}

impl Grid {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn measure(&self) -> &SiteMeasure {
        &self.measure
    }

    /// Index of the node nearest to `x`.
    pub fn nearest_node(&self, x: f64) -> usize {
        match self.domain {
            Domain::Patches { .. } => (x.round() as usize).min(self.nodes.len() - 1),
            Domain::Ring { length } => {
                let n = self.nodes.len() as f64;
                ((x.rem_euclid(length) / length * n).round() as usize) % self.nodes.len()
            }
            Domain::Interval { length } => {
                let n = (self.nodes.len() - 1) as f64;
                ((x.clamp(0.0, length) / length * n).round() as usize).min(self.nodes.len() - 1)
            }
        }
    }

    /// Dense row-major matrix `A` with `(A f)_i ~ int W(r_i, r') f(r')
    /// dq(r')`. On reflecting intervals the integral runs against the even
    /// reflection and 2L-periodic extension of both the field and the
    /// density, folded back onto [0, L]; the trapezoid endpoint half-weights
    /// combine with the coincident reflection images to the correct uniform
    /// weights of the extended grid.
    pub fn kernel_matrix(&self, kernel: &Kernel) -> Result<Vec<f64>> {
        let n = self.nodes.len();
        let amp = kernel.amplitude;
        let mut a = vec![0.0; n * n];
        match (&kernel.kind, self.domain, self.boundary) {
            (KernelKind::Constant { c }, _, _) => {
                for i in 0..n {
                    for k in 0..n {
                        a[i * n + k] = amp * c * self.weights[k];
                    }
                }
            }
            (KernelKind::PatchMatrix { m, entries }, Domain::Patches { count }, _) => {
                if *m != count {
                    return Err(Error::LengthMismatch {
                        expected: count,
                        got: *m,
                    });
                }
                for i in 0..n {
                    for k in 0..n {
                        a[i * n + k] = amp * entries[i * m + k] * self.weights[k];
                    }
                }
            }
            (KernelKind::GaussianRing { sigma, length }, Domain::Ring { length: dl }, Boundary::Periodic) => {
                if (length - dl).abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "ring kernel length {length} differs from domain length {dl}"
                    )));
                }
                let norm = crate::model::kernel::ring_norm(*sigma, *length) / (sigma * SQRT_2PI);
                for i in 0..n {
                    for k in 0..n {
                        let d = crate::model::kernel::ring_distance(
                            self.nodes[i],
                            self.nodes[k],
                            *length,
                        );
                        a[i * n + k] = amp
                            * norm
                            * (-d * d / (2.0 * sigma * sigma)).exp()
                            * self.weights[k];
                    }
                }
            }
            (KernelKind::GaussianLine { sigma }, Domain::Interval { length }, Boundary::Reflecting) => {
                let gauss = |d: f64| (-d * d / (2.0 * sigma * sigma)).exp() / (sigma * SQRT_2PI);
                // Enough images that the discarded tail is < 1e-12 of mass.
                let span = 8.0 * sigma;
                let n_img = (span / (2.0 * length)).ceil() as i64 + 1;
                for i in 0..n {
                    let xi = self.nodes[i];
                    for k in 0..n {
                        let xk = self.nodes[k];
                        let mut s = 0.0;
                        for m in -n_img..=n_img {
                            let shift = 2.0 * length * m as f64;
                            s += gauss(xi - (xk + shift)) + gauss(xi - (-xk + shift));
                        }
                        a[i * n + k] = amp * s * self.weights[k];
                    }
                }
            }
            (kind, domain, boundary) => {
                return Err(Error::Config(format!(
                    "kernel {kind:?} is not defined on domain {domain:?} with boundary {boundary:?}"
                )));
            }
        }
        Ok(a)
    }
}

/// Build a quadrature grid over the measure's domain.
///
/// Ring: `n` equispaced nodes with the duplicate endpoint dropped
/// (periodic trapezoid = rectangle rule). Interval: `n` nodes including
/// both endpoints, trapezoid weights. Patches: one node per patch. Weights
/// carry the measure density and are normalized to sum to exactly 1.
pub fn make_grid(measure: &SiteMeasure, n_nodes: usize, boundary: Boundary) -> Result<Grid> {
    measure.validate()?;
    let (nodes, mut weights): (Vec<f64>, Vec<f64>) = match (measure.domain, boundary) {
        (Domain::Ring { length }, Boundary::Periodic) => {
            if n_nodes < 3 {
                return Err(Error::InvalidInput(
                    "continuum grids need at least 3 nodes".into(),
                ));
            }
            let dx = length / n_nodes as f64;
            let nodes: Vec<f64> = (0..n_nodes).map(|k| k as f64 * dx).collect();
            let weights = nodes.iter().map(|x| measure.density(*x) * dx).collect();
            (nodes, weights)
        }
        (Domain::Interval { length }, Boundary::Reflecting) => {
            if n_nodes < 3 {
                return Err(Error::InvalidInput(
                    "continuum grids need at least 3 nodes".into(),
                ));
            }
            let dx = length / (n_nodes - 1) as f64;
            let nodes: Vec<f64> = (0..n_nodes).map(|k| k as f64 * dx).collect();
            let weights = nodes
                .iter()
                .enumerate()
                .map(|(k, x)| {
                    let trap = if k == 0 || k == n_nodes - 1 { dx / 2.0 } else { dx };
                    measure.density(*x) * trap
                })
                .collect();
            (nodes, weights)
        }
        (Domain::Patches { count }, Boundary::None) => {
            let nodes: Vec<f64> = (0..count).map(|k| k as f64).collect();
            let weights = match &measure.kind {
                MeasureKind::Discrete { weights } => weights.clone(),
                _ => return Err(Error::Config("patch domain requires a discrete measure".into())),
            };
            (nodes, weights)
        }
        (domain, boundary) => {
            return Err(Error::Config(format!(
                "unsupported domain/boundary combination: {domain:?} with {boundary:?}"
            )));
        }
    };

    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("quadrature weights sum to zero".into()));
    }
    for w in weights.iter_mut() {
        *w /= total;
    }

    Ok(Grid {
        domain: measure.domain,
        boundary,
        nodes,
        weights,
        measure: measure.clone(),
    })
}

/// Quadrature of per-node values against the grid's measure.
pub fn quadrature(f: &[f64], g: &Grid) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::LengthMismatch {
            expected: g.len(),
            got: f.len(),
        });
    }
    Ok(f.iter().zip(&g.weights).map(|(a, b)| a * b).sum())
}
