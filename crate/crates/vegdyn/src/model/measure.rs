//! Site-distribution measures and position sampling.

use crate::error::{Error, Result};
use crate::rng::Stream;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Spatial domain the sites live on. Patch domains use the patch index as
/// the location coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Domain {
    Ring { length: f64 },
    Interval { length: f64 },
    Patches { count: usize },
}

impl Domain {
    pub fn length(&self) -> f64 {
        match self {
            Domain::Ring { length } | Domain::Interval { length } => *length,
            Domain::Patches { count } => *count as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MeasureKind {
    Uniform,
    /// Density `a + b x` on `[0, L]`; total mass `aL + bL^2/2` must be 1.
    Trapezoid { a: f64, b: f64 },
    /// Atom weights per patch, summing to 1.
    Discrete { weights: Vec<f64> },
}

/// A probability measure over a [`Domain`], from which site positions are
/// drawn i.i.d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteMeasure {
    pub domain: Domain,
    pub kind: MeasureKind,
}

impl SiteMeasure {
    pub fn uniform(domain: Domain) -> Result<Self> {
        let m = Self {
            domain,
            kind: MeasureKind::Uniform,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn trapezoid(a: f64, b: f64, length: f64) -> Result<Self> {
        let m = Self {
            domain: Domain::Interval { length },
            kind: MeasureKind::Trapezoid { a, b },
        };
        m.validate()?;
        Ok(m)
    }

    pub fn discrete(weights: Vec<f64>) -> Result<Self> {
        let m = Self {
            domain: Domain::Patches {
                count: weights.len(),
            },
            kind: MeasureKind::Discrete { weights },
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.domain, &self.kind) {
            (Domain::Ring { length } | Domain::Interval { length }, MeasureKind::Uniform) => {
                if !(*length > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "domain length must be > 0, got {length}"
                    )));
                }
            }
            (Domain::Interval { length }, MeasureKind::Trapezoid { a, b }) => {
                if !(*length > 0.0) || *a < 0.0 || a + b * length < 0.0 {
                    return Err(Error::InvalidInput(
                        "trapezoid density must be nonnegative on [0, L]".into(),
                    ));
                }
                let mass = a * length + b * length * length / 2.0;
                if (mass - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidInput(format!(
                        "trapezoid measure has mass {mass}, expected 1 (aL + bL^2/2 = 1)"
                    )));
                }
            }
            (Domain::Patches { count }, MeasureKind::Discrete { weights }) => {
                if weights.len() != *count {
                    return Err(Error::LengthMismatch {
                        expected: *count,
                        got: weights.len(),
                    });
                }
                if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
                    return Err(Error::InvalidInput(
                        "discrete weights must be nonnegative".into(),
                    ));
                }
                let mass: f64 = weights.iter().sum();
                if (mass - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidInput(format!(
                        "discrete weights sum to {mass}, expected 1"
                    )));
                }
            }
            (d, k) => {
                return Err(Error::InvalidInput(format!(
                    "measure kind {k:?} is not defined on domain {d:?}"
                )));
            }
        }
        Ok(())
    }

    /// Probability density at `x` (with respect to Lebesgue on continuum
    /// domains; the atom weight for patch domains).
    pub fn density(&self, x: f64) -> f64 {
        match (&self.domain, &self.kind) {
            (Domain::Ring { length } | Domain::Interval { length }, MeasureKind::Uniform) => {
                1.0 / length
            }
            (_, MeasureKind::Trapezoid { a, b }) => a + b * x,
            (_, MeasureKind::Discrete { weights }) => weights[x.round() as usize],
            _ => 0.0,
        }
    }

    /// CDF on continuum domains (coordinate measured from 0).
    pub fn cdf(&self, x: f64) -> f64 {
        match (&self.domain, &self.kind) {
            (Domain::Ring { length } | Domain::Interval { length }, MeasureKind::Uniform) => {
                (x / length).clamp(0.0, 1.0)
            }
            (_, MeasureKind::Trapezoid { a, b }) => (a * x + b * x * x / 2.0).clamp(0.0, 1.0),
            (_, MeasureKind::Discrete { weights }) => {
                let k = (x.floor() as usize).min(weights.len().saturating_sub(1));
                weights[..=k].iter().sum()
            }
            _ => 0.0,
        }
    }

    /// Inverse CDF of one uniform draw.
    fn quantile(&self, u: f64) -> f64 {
        match (&self.domain, &self.kind) {
            (Domain::Ring { length } | Domain::Interval { length }, MeasureKind::Uniform) => {
                length * u
            }
            (_, MeasureKind::Trapezoid { a, b }) => {
                if b.abs() < 1e-300 {
                    u / a
                } else {
                    (-a + (a * a + 2.0 * b * u).sqrt()) / b
                }
            }
            (_, MeasureKind::Discrete { weights }) => {
                let mut acc = 0.0;
                for (k, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        return k as f64;
                    }
                }
                (weights.len() - 1) as f64
            }
            _ => f64::NAN,
        }
    }
}

/// Draw `n` i.i.d. positions from the measure. Deterministic given the
/// stream state.
pub fn sample_sites(m: &SiteMeasure, n: usize, rng: &mut Stream) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidInput("site count must be at least 1".into()));
    }
    m.validate()?;
    Ok((0..n).map(|_| m.quantile(rng.random())).collect())
}
