//! Quasi-stationary distribution of the two-state single-patch chain.
//!
//! The grass-proportion chain restricted to the non-absorbed states has an
//! N x N tridiagonal generator Q (row k = k forest sites). Its dominant
//! left eigenpair gives the absorption rate `rho` and the QSD. The matrix
//! carries a global 1/N factor on its rates — a time rescaling of the
//! chain the simulator runs; [`TimeScale::Process`] rescales `rho` by N
//! back to the simulator's event clock.

use crate::error::{Error, Result};
use crate::model::SigmoidParams;
use rayon::prelude::*;

/// Tridiagonal restricted generator of the grass-proportion chain.
///
/// Row k (1-based, k = 1..N forest sites, grass fraction g = (N-k)/N):
/// sub-diagonal `(k/N) phi(g)`, diagonal `-(k/N)(phi(g) + Jbar g)`,
/// super-diagonal `(k Jbar / N) g`. Row 1 leaks `phi((N-1)/N)/N` to the
/// absorbing all-grass state; every other row sums to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedGenerator {
    n: usize,
    jbar: f64,
    /// sub[i] = Q[i][i-1] for i >= 1 (0-based rows).
    sub: Vec<f64>,
    diag: Vec<f64>,
    /// sup[i] = Q[i][i+1] for i <= n-2.
    sup: Vec<f64>,
    /// Absorption rate out of row 0 (one forest site left).
    a1: f64,
}

impl RestrictedGenerator {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn jbar(&self) -> f64 {
        self.jbar
    }

    pub fn diagonals(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.sub, &self.diag, &self.sup)
    }

    pub fn absorption_entry(&self) -> f64 {
        self.a1
    }

    /// Left action `x Q` (x indexed like the rows).
    pub fn left_apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|j| {
                let mut v = x[j] * self.diag[j];
                if j > 0 {
                    v += x[j - 1] * self.sup[j - 1];
                }
                if j + 1 < n {
                    v += x[j + 1] * self.sub[j + 1];
                }
                v
            })
            .collect()
    }

    /// Grass fraction of restricted state index i (0-based; i+1 forest
    /// sites).
    pub fn grass_fraction(&self, i: usize) -> f64 {
        (self.n - (i + 1)) as f64 / self.n as f64
    }
}

/// Build the restricted generator (matrix clock: rates carry the 1/N
/// factor).
pub fn build_restricted_generator(
    n: usize,
    jbar: f64,
    phi: &SigmoidParams,
) -> Result<RestrictedGenerator> {
    if n == 0 {
        return Err(Error::InvalidInput("N must be at least 1".into()));
    }
    if !(jbar > 0.0) {
        return Err(Error::InvalidInput(format!("Jbar must be > 0, got {jbar}")));
    }
    phi.validate()?;
    let phi0 = phi.eval(0.0);
    if !(phi0 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "QSD existence requires phi(0) > 0, got {phi0}"
        )));
    }
    let nf = n as f64;
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    for k in 1..=n {
        let kf = k as f64;
        let g = (nf - kf) / nf;
        let burn = phi.eval(g);
        if k >= 2 {
            sub[k - 1] = kf / nf * burn;
        }
        diag[k - 1] = -(kf / nf) * (burn + jbar * g);
        if k < n {
            sup[k - 1] = kf * jbar / nf * g;
        }
    }
    let a1 = phi.eval((nf - 1.0) / nf) / nf;
    Ok(RestrictedGenerator {
        n,
        jbar,
        sub,
        diag,
        sup,
        a1,
    })
}

/// Dominant left eigenpair: absorption rate, QSD, and achieved residual.
#[derive(Debug, Clone)]
pub struct QsdResult {
    /// Absorption rate (negative of Q's dominant eigenvalue).
    pub rho: f64,
    /// L1-normalized nonnegative left eigenvector over the restricted
    /// states (index i = i+1 forest sites).
    pub qsd: Vec<f64>,
    /// `||x Q + rho x||_inf` at return.
    pub residual: f64,
    pub iterations: usize,
}

impl QsdResult {
    /// Grass fraction at the QSD mode.
    pub fn mode_grass_fraction(&self, gen: &RestrictedGenerator) -> f64 {
        let mode = self
            .qsd
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        gen.grass_fraction(mode)
    }
}

const MAX_ITERATIONS: usize = 10_000;

/// Inverse power iteration with zero shift on Q-transpose.
///
/// Q is strictly stable so Q^T is invertible and the iteration converges
/// to the eigenvalue of smallest magnitude, which for this (real-spectrum)
/// generator is the dominant one. Each solve is a Thomas sweep with a
/// partial-pivoting band-LU fallback on pivot breakdown.
pub fn dominant_eigenpair(gen: &RestrictedGenerator, tol: f64) -> Result<QsdResult> {
    let n = gen.n;
    // Q^T diagonals: lower = gen.sup shifted, upper = gen.sub shifted.
    let lower: Vec<f64> = (0..n)
        .map(|i| if i > 0 { gen.sup[i - 1] } else { 0.0 })
        .collect();
    let upper: Vec<f64> = (0..n)
        .map(|i| if i + 1 < n { gen.sub[i + 1] } else { 0.0 })
        .collect();

    let mut x = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        let mut y = match thomas_solve(&lower, &gen.diag, &upper, &x) {
            Some(y) => y,
            None => band_lu_solve(&lower, &gen.diag, &upper, &x)?,
        };
        // L1 normalization with the sign fixed by the dominant entry.
        let (mut norm, mut max_abs, mut max_sign) = (0.0, 0.0, 1.0);
        for v in &y {
            norm += v.abs();
            if v.abs() > max_abs {
                max_abs = v.abs();
                max_sign = if *v < 0.0 { -1.0 } else { 1.0 };
            }
        }
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NonFinite {
                context: "inverse power iterate".into(),
            });
        }
        for v in y.iter_mut() {
            *v *= max_sign / norm;
        }
        // rho from the absorption flux: the only nonzero row sum of Q is
        // row 0 (leak a1), so sum(x Q) = -a1 x_0 = -rho.
        let rho = gen.a1 * y[0];
        let xq = gen.left_apply(&y);
        residual = xq
            .iter()
            .zip(&y)
            .map(|(a, b)| (a + rho * b).abs())
            .fold(0.0, f64::max);
        x = y;
        if residual < tol {
            // Clamp the tiny negative entries an almost-converged iterate
            // can carry.
            let mut clean = x.clone();
            let mut s = 0.0;
            for v in clean.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
                s += *v;
            }
            for v in clean.iter_mut() {
                *v /= s;
            }
            // Past the cliff the true rate can underflow below roundoff;
            // report the numerical zero rather than rounding noise's sign.
            return Ok(QsdResult {
                rho: rho.max(0.0),
                qsd: clean,
                residual,
                iterations: it,
            });
        }
    }
    Err(Error::EigenNoConvergence {
        residual,
        iterations: MAX_ITERATIONS,
    })
}

/// Thomas sweep for `T y = b`; `None` on pivot breakdown.
fn thomas_solve(lower: &[f64], diag: &[f64], upper: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    if diag[0] == 0.0 {
        return None;
    }
    c[0] = upper[0] / diag[0];
    d[0] = b[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        if m == 0.0 || !m.is_finite() {
            return None;
        }
        c[i] = upper[i] / m;
        d[i] = (b[i] - lower[i] * d[i - 1]) / m;
    }
    let mut y = vec![0.0; n];
    y[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        y[i] = d[i] - c[i] * y[i + 1];
    }
    Some(y)
}

/// Banded LU with partial pivoting for a tridiagonal system (fill-in of
/// one extra superdiagonal).
fn band_lu_solve(lower: &[f64], diag: &[f64], upper: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    // Rows stored as [sub, diag, sup, sup2].
    let mut a = vec![[0.0; 4]; n];
    for i in 0..n {
        a[i][0] = lower[i];
        a[i][1] = diag[i];
        a[i][2] = if i + 1 < n { upper[i] } else { 0.0 };
    }
    let mut rhs = b.to_vec();
    for k in 0..n - 1 {
        // Pivot between rows k and k+1 on column k. Row i's slots
        // [0..4] hold columns i-1..i+2, so the swap shifts each row's
        // entries by one slot to stay column-aligned.
        let below = a[k + 1][0];
        if below.abs() > a[k][1].abs() {
            let old_k = [a[k][1], a[k][2], a[k][3]];
            a[k][1] = a[k + 1][0];
            a[k][2] = a[k + 1][1];
            a[k][3] = a[k + 1][2];
            a[k + 1][0] = old_k[0];
            a[k + 1][1] = old_k[1];
            a[k + 1][2] = old_k[2];
            a[k + 1][3] = 0.0;
            rhs.swap(k, k + 1);
        }
        let pivot = a[k][1];
        if pivot == 0.0 {
            return Err(Error::EigenNoConvergence {
                residual: f64::INFINITY,
                iterations: 0,
            });
        }
        let factor = a[k + 1][0] / pivot;
        a[k + 1][0] = 0.0;
        a[k + 1][1] -= factor * a[k][2];
        a[k + 1][2] -= factor * a[k][3];
        rhs[k + 1] -= factor * rhs[k];
    }
    let mut y = vec![0.0; n];
    for i in (0..n).rev() {
        let mut v = rhs[i];
        if i + 1 < n {
            v -= a[i][2] * y[i + 1];
        }
        if i + 2 < n {
            v -= a[i][3] * y[i + 2];
        }
        if a[i][1] == 0.0 {
            return Err(Error::EigenNoConvergence {
                residual: f64::INFINITY,
                iterations: 0,
            });
        }
        y[i] = v / a[i][1];
    }
    Ok(y)
}

/// Which clock `rho` is reported in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScale {
    /// The matrix's own scale (rates carry the 1/N factor).
    Matrix,
    /// The event clock of the finite-size process (rho multiplied by N).
    Process,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub n: usize,
    pub jbar: f64,
    pub rho: f64,
    pub qsd: Vec<f64>,
}

/// Absorption-rate and QSD sweep over (N, Jbar).
#[derive(Debug, Clone)]
pub struct QsdSweep {
    pub rows: Vec<SweepRow>,
    pub time_scale: TimeScale,
    /// (N, Jbar) points where rho increased with Jbar; checked, not
    /// assumed.
    pub monotonicity_violations: Vec<(usize, f64)>,
}

impl QsdSweep {
    pub fn rho(&self, n: usize, jbar: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.n == n && (r.jbar - jbar).abs() < 1e-12)
            .map(|r| r.rho)
    }

    /// CSV export: `N,jbar,rho`.
    pub fn write_rho_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "N,jbar,rho")?;
        for r in &self.rows {
            writeln!(w, "{},{},{}", r.n, r.jbar, r.rho)?;
        }
        Ok(())
    }

    /// CSV export: `N,jbar,grass_fraction,mass` (grass fraction of each
    /// restricted state, i.e. the QSD's own axis).
    pub fn write_qsd_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "N,jbar,grass_fraction,mass")?;
        for r in &self.rows {
            for (i, mass) in r.qsd.iter().enumerate() {
                let g = (r.n - (i + 1)) as f64 / r.n as f64;
                writeln!(w, "{},{},{},{}", r.n, r.jbar, g, mass)?;
            }
        }
        Ok(())
    }
}

/// Sweep the dominant eigenpair over N and Jbar grids. Points run
/// concurrently; results are merged in deterministic order.
pub fn qsd_sweep(
    n_list: &[usize],
    jbar_grid: &[f64],
    phi: &SigmoidParams,
    time_scale: TimeScale,
) -> Result<QsdSweep> {
    if n_list.is_empty() || jbar_grid.is_empty() {
        return Err(Error::InvalidInput("sweep grids must be nonempty".into()));
    }
    let points: Vec<(usize, f64)> = n_list
        .iter()
        .flat_map(|n| jbar_grid.iter().map(move |j| (*n, *j)))
        .collect();
    let rows: Vec<SweepRow> = points
        .par_iter()
        .map(|(n, jbar)| -> Result<SweepRow> {
            let gen = build_restricted_generator(*n, *jbar, phi)?;
            let res = dominant_eigenpair(&gen, 1e-12)?;
            let rho = match time_scale {
                TimeScale::Matrix => res.rho,
                TimeScale::Process => res.rho * *n as f64,
            };
            Ok(SweepRow {
                n: *n,
                jbar: *jbar,
                rho,
                qsd: res.qsd,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut violations = Vec::new();
    for n in n_list {
        let mut per_n: Vec<&SweepRow> = rows.iter().filter(|r| r.n == *n).collect();
        per_n.sort_by(|a, b| a.jbar.partial_cmp(&b.jbar).unwrap());
        for w in per_n.windows(2) {
            if w[1].rho > w[0].rho * (1.0 + 1e-9) {
                violations.push((*n, w[1].jbar));
            }
        }
    }
    Ok(QsdSweep {
        rows,
        time_scale,
        monotonicity_violations: violations,
    })
}
