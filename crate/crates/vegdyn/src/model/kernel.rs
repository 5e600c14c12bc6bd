//! Spatial interaction kernels.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Kernel shape, without the rate amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelKind {
    /// Position-independent weight `c`.
    Constant { c: f64 },
    /// Ring Gaussian with the normalization `C(sigma)` chosen so that the
    /// kernel has unit mass against the uniform measure on a ring of the
    /// given length: `C(sigma) = L (2 Phi(L/2sigma) - 1)^{-1}` with `Phi`
    /// the standard normal CDF.
    GaussianRing { sigma: f64, length: f64 },
    /// Standard Gaussian of convolution type; unit mass against Lebesgue.
    GaussianLine { sigma: f64 },
    /// Explicit patch-to-patch weights, row-major `m x m`.
    PatchMatrix { m: usize, entries: Vec<f64> },
}

/// A kernel shape scaled by a rate amplitude (J-bar, beta, or 1 for the
/// fire kernel W).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub amplitude: f64,
}

impl Kernel {
    pub fn new(kind: KernelKind, amplitude: f64) -> Result<Self> {
        let k = Self { kind, amplitude };
        k.validate()?;
        Ok(k)
    }

    pub fn constant(c: f64, amplitude: f64) -> Result<Self> {
        Self::new(KernelKind::Constant { c }, amplitude)
    }

    pub fn gaussian_ring(sigma: f64, length: f64, amplitude: f64) -> Result<Self> {
        Self::new(KernelKind::GaussianRing { sigma, length }, amplitude)
    }

    pub fn gaussian_line(sigma: f64, amplitude: f64) -> Result<Self> {
        Self::new(KernelKind::GaussianLine { sigma }, amplitude)
    }

    pub fn patch_matrix(m: usize, entries: Vec<f64>, amplitude: f64) -> Result<Self> {
        Self::new(KernelKind::PatchMatrix { m, entries }, amplitude)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() || self.amplitude < 0.0 {
            return Err(Error::InvalidInput(format!(
                "kernel amplitude must be finite and nonnegative, got {}",
                self.amplitude
            )));
        }
        match &self.kind {
            KernelKind::Constant { c } => {
                if !c.is_finite() || *c < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "constant kernel weight must be nonnegative, got {c}"
                    )));
                }
            }
            KernelKind::GaussianRing { sigma, length } => {
                if !(*sigma > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "gaussian_ring sigma must be > 0, got {sigma}"
                    )));
                }
                if !(*length > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "gaussian_ring length must be > 0, got {length}"
                    )));
                }
            }
            KernelKind::GaussianLine { sigma } => {
                if !(*sigma > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "gaussian_line sigma must be > 0, got {sigma}"
                    )));
                }
            }
            KernelKind::PatchMatrix { m, entries } => {
                if entries.len() != m * m {
                    return Err(Error::LengthMismatch {
                        expected: m * m,
                        got: entries.len(),
                    });
                }
                if let Some(bad) = entries.iter().find(|e| !e.is_finite() || **e < 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "patch matrix entries must be nonnegative, found {bad}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Pointwise evaluation at a pair of locations. For patch kernels the
    /// locations are patch indices.
    pub fn eval(&self, r: f64, r_prime: f64) -> Result<f64> {
        let base = match &self.kind {
            KernelKind::Constant { c } => *c,
            KernelKind::GaussianRing { sigma, length } => {
                let d = ring_distance(r, r_prime, *length);
                ring_norm(*sigma, *length) / (sigma * SQRT_2PI)
                    * (-d * d / (2.0 * sigma * sigma)).exp()
            }
            KernelKind::GaussianLine { sigma } => {
                let d = r - r_prime;
                (-d * d / (2.0 * sigma * sigma)).exp() / (sigma * SQRT_2PI)
            }
            KernelKind::PatchMatrix { m, entries } => {
                let (i, j) = (patch_index(r, *m)?, patch_index(r_prime, *m)?);
                entries[i * m + j]
            }
        };
        Ok(self.amplitude * base)
    }

    /// Pointwise sup `||W||_inf`, used for stored rate bounds.
    pub fn sup(&self) -> f64 {
        self.amplitude
            * match &self.kind {
                KernelKind::Constant { c } => *c,
                KernelKind::GaussianRing { sigma, length } => {
                    ring_norm(*sigma, *length) / (sigma * SQRT_2PI)
                }
                KernelKind::GaussianLine { sigma } => 1.0 / (sigma * SQRT_2PI),
                KernelKind::PatchMatrix { entries, .. } => {
                    entries.iter().cloned().fold(0.0, f64::max)
                }
            }
    }
}

/// Checked pointwise kernel evaluation.
pub fn eval_kernel(k: &Kernel, r: f64, r_prime: f64) -> Result<f64> {
    k.validate()?;
    k.eval(r, r_prime)
}

/// Distance on the ring of the given circumference.
pub fn ring_distance(r: f64, r_prime: f64, length: f64) -> f64 {
    let d = (r - r_prime).rem_euclid(length);
    d.min(length - d)
}

/// `C(sigma) = L / (2 Phi(L / 2 sigma) - 1)`.
pub fn ring_norm(sigma: f64, length: f64) -> f64 {
    length / erf(length / (2.0 * sigma * std::f64::consts::SQRT_2))
}

fn patch_index(r: f64, m: usize) -> Result<usize> {
    let i = r.round();
    if !(0.0..(m as f64)).contains(&i) || (r - i).abs() > 1e-9 {
        return Err(Error::IndexOutOfRange {
            what: "patch",
            index: if r < 0.0 { usize::MAX } else { r.round() as usize },
            len: m,
        });
    }
    Ok(i as usize)
}

/// Error function, accurate to ~1e-9 absolute over the whole line.
///
/// Alternating Maclaurin series below |x| = 4 (the largest term there is
/// ~4e6, costing ~7 of the available 16 digits); three-term asymptotic
/// expansion of erfc beyond, where erfc itself is below 1.6e-8.
pub fn erf(x: f64) -> f64 {
    let ax = x.abs();
    let s = if x < 0.0 { -1.0 } else { 1.0 };
    if ax < 4.0 {
        let x2 = ax * ax;
        let mut term = ax;
        let mut sum = ax;
        for k in 1..200 {
            let kf = k as f64;
            term *= -x2 / kf;
            let add = term / (2.0 * kf + 1.0);
            sum += add;
            if add.abs() < 1e-18 * sum.abs().max(1.0) {
                break;
            }
        }
        s * sum * 2.0 / std::f64::consts::PI.sqrt()
    } else {
        let x2 = ax * ax;
        let erfc = (-x2).exp() / (ax * std::f64::consts::PI.sqrt())
            * (1.0 - 1.0 / (2.0 * x2) + 3.0 / (4.0 * x2 * x2));
        s * (1.0 - erfc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_reference_values() {
        // Abramowitz & Stegun table values.
        assert!((erf(0.5) - 0.520_499_877_8).abs() < 1e-9);
        assert!((erf(1.0) - 0.842_700_792_9).abs() < 1e-9);
        assert!((erf(2.0) - 0.995_322_265_0).abs() < 1e-9);
        assert!((erf(3.5) - 0.999_999_256_8).abs() < 1e-9);
        assert!((erf(5.0) - 1.0).abs() < 1e-11);
        assert!((erf(-1.0) + erf(1.0)).abs() < 1e-15);
    }

    #[test]
    fn ring_kernel_peak() {
        // C(0.05) ~= 5 since Phi(50) ~= 1; peak = C / (sigma sqrt(2 pi)).
        let k = Kernel::gaussian_ring(0.05, 5.0, 1.0).unwrap();
        let v = eval_kernel(&k, 1.3, 1.3).unwrap();
        assert!((v - 39.894_228).abs() < 1e-4, "peak {v}");
    }

    #[test]
    fn ring_distance_wraps() {
        let k = Kernel::gaussian_ring(0.05, 5.0, 1.0).unwrap();
        let delta = 0.03;
        let a = k.eval(0.0, 5.0 - delta).unwrap();
        let b = k.eval(0.0, delta).unwrap();
        assert!((a - b).abs() < 1e-12 * a.max(1.0));
    }

    #[test]
    fn single_patch_identity() {
        let k = Kernel::patch_matrix(1, vec![1.0], 1.0).unwrap();
        assert_eq!(eval_kernel(&k, 0.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn patch_index_out_of_range() {
        let k = Kernel::patch_matrix(2, vec![1.0; 4], 1.0).unwrap();
        assert!(matches!(
            eval_kernel(&k, 0.0, 2.0),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn gaussian_symmetry() {
        let k = Kernel::gaussian_line(0.02, 1.1).unwrap();
        let a = k.eval(0.3, 0.45).unwrap();
        let b = k.eval(0.45, 0.3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_negative_entries() {
        assert!(Kernel::patch_matrix(1, vec![-0.1], 1.0).is_err());
        assert!(Kernel::gaussian_ring(0.0, 5.0, 1.0).is_err());
    }
}
