//! Sigmoidal rate functions of local cover.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Logistic rate function `lo + (hi-lo) / (1 + exp(-(x-center)/slope))`.
///
/// `lo` and `hi` are rates (1/time); `center` and `slope` are dimensionless
/// cover fractions. Increasing when `hi > lo`, decreasing when `hi < lo`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidParams {
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
    pub slope: f64,
}

impl SigmoidParams {
    pub fn new(lo: f64, hi: f64, center: f64, slope: f64) -> Result<Self> {
        let p = Self {
            lo,
            hi,
            center,
            slope,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slope > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sigmoid slope must be > 0, got {}",
                self.slope
            )));
        }
        if self.lo < 0.0 || self.hi < 0.0 {
            return Err(Error::InvalidInput(format!(
                "sigmoid rates must be nonnegative, got lo = {}, hi = {}",
                self.lo, self.hi
            )));
        }
        for (name, v) in [
            ("lo", self.lo),
            ("hi", self.hi),
            ("center", self.center),
            ("slope", self.slope),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("sigmoid {name} is not finite")));
            }
        }
        Ok(())
    }

    /// Fast path used in inner loops. Cover is clamped to [0, 1]; rate
    /// functions are only meaningful on cover fractions, and the clamp
    /// absorbs small quadrature overshoot. Non-finite input propagates as
    /// NaN for the solver-level guards to catch.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        // exp argument clamped at +-700: the resulting error is below
        // 1e-300, while unclamped values overflow to inf.
        let z = (-(x - self.center) / self.slope).clamp(-700.0, 700.0);
        self.lo + (self.hi - self.lo) / (1.0 + z.exp())
    }

    /// Largest value the function takes on [0, 1].
    pub fn sup(&self) -> f64 {
        self.eval(0.0).max(self.eval(1.0))
    }

    /// Lipschitz constant on [0, 1]: the logistic's maximal derivative.
    pub fn lipschitz(&self) -> f64 {
        (self.hi - self.lo).abs() / (4.0 * self.slope)
    }

    /// Appendix fire-mortality parameters (phi).
    pub fn phi_default() -> Self {
        Self {
            lo: 0.1,
            hi: 0.9,
            center: 0.4,
            slope: 0.05,
        }
    }

    /// Appendix sapling-maturation parameters (omega); decreasing.
    pub fn omega_default() -> Self {
        Self {
            lo: 0.9,
            hi: 0.4,
            center: 0.4,
            slope: 0.01,
        }
    }
}

/// Checked evaluation of a sigmoid rate function at cover fraction `x`.
pub fn eval_sigmoid(p: &SigmoidParams, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidInput(format!(
            "sigmoid argument must be finite, got {x}"
        )));
    }
    p.validate()?;
    Ok(p.eval(x))
}
