//! Equilibria and bifurcation structure of the two-state single-patch
//! system `dG/dt = (1 - G)(phi(G) - Jbar G)`.

use crate::error::{Error, Result};
use crate::model::SigmoidParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    /// The all-grass state G = 1.
    Trivial,
    Nontrivial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumPoint {
    pub jbar: f64,
    pub grass: f64,
    pub stability: Stability,
    pub kind: BranchKind,
}

fn rhs(g: f64, jbar: f64, phi: &SigmoidParams) -> f64 {
    (1.0 - g) * (phi.eval(g) - jbar * g)
}

/// All equilibria at one `Jbar`: G = 1 plus the roots of
/// `phi(G) = Jbar G` found by a sign-change scan refined by bisection.
pub fn equilibria_2state(jbar: f64, phi: &SigmoidParams) -> Result<Vec<EquilibriumPoint>> {
    if !(jbar > 0.0) {
        return Err(Error::InvalidInput(format!("Jbar must be > 0, got {jbar}")));
    }
    phi.validate()?;
    let residual = |g: f64| phi.eval(g) - jbar * g;

    const SCAN: usize = 10_000;
    let mut roots: Vec<f64> = Vec::new();
    let mut prev_g = 0.0;
    let mut prev_v = residual(0.0);
    for i in 1..=SCAN {
        let g = i as f64 / SCAN as f64;
        let v = residual(g);
        if v == 0.0 {
            roots.push(g);
        } else if prev_v.signum() != v.signum() && prev_v != 0.0 {
            let (mut lo, mut hi) = (prev_g, g);
            let mut flo = prev_v;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = residual(mid);
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-14 {
                    break;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev_g = g;
        prev_v = v;
    }
    // Merge duplicates and the root at G = 1 (transcritical tangency)
    // into single points.
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
    roots.retain(|g| (g - 1.0).abs() >= 1e-6);

    let stability_at = |g: f64| {
        let d = (rhs(g + 1e-6, jbar, phi) - rhs(g - 1e-6, jbar, phi)) / 2e-6;
        if d < 0.0 {
            Stability::Stable
        } else {
            Stability::Unstable
        }
    };

    let mut out: Vec<EquilibriumPoint> = roots
        .into_iter()
        .map(|g| EquilibriumPoint {
            jbar,
            grass: g,
            stability: stability_at(g),
            kind: BranchKind::Nontrivial,
        })
        .collect();
    out.push(EquilibriumPoint {
        jbar,
        grass: 1.0,
        stability: stability_at(1.0),
        kind: BranchKind::Trivial,
    });
    out.sort_by(|a, b| a.grass.partial_cmp(&b.grass).unwrap());
    Ok(out)
}

/// Bifurcation diagram over a `Jbar` grid: per-point branch table,
/// saddle-node locations (where the nontrivial root count jumps by 2,
/// bisected in `Jbar`), and the transcritical point `Jbar = phi(1)`.
#[derive(Debug, Clone)]
pub struct BifurcationDiagram {
    pub points: Vec<EquilibriumPoint>,
    pub saddle_nodes: Vec<f64>,
    /// `phi(1)`, reported when it falls inside the swept range.
    pub transcritical: Option<f64>,
}

impl BifurcationDiagram {
    /// CSV export: `jbar,grass,stability,kind`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "jbar,grass,stability,kind")?;
        for p in &self.points {
            writeln!(
                w,
                "{},{},{},{}",
                p.jbar,
                p.grass,
                match p.stability {
                    Stability::Stable => "stable",
                    Stability::Unstable => "unstable",
                },
                match p.kind {
                    BranchKind::Trivial => "trivial",
                    BranchKind::Nontrivial => "nontrivial",
                }
            )?;
        }
        Ok(())
    }
}

pub fn bifurcation_sweep(jbar_grid: &[f64], phi: &SigmoidParams) -> Result<BifurcationDiagram> {
    if jbar_grid.len() < 2 {
        return Err(Error::InvalidInput("sweep grid needs at least 2 points".into()));
    }
    let mut grid = jbar_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let count_nontrivial = |jbar: f64| -> Result<usize> {
        Ok(equilibria_2state(jbar, phi)?
            .iter()
            .filter(|p| p.kind == BranchKind::Nontrivial)
            .count())
    };

    let mut points = Vec::new();
    let mut counts = Vec::with_capacity(grid.len());
    for jbar in &grid {
        let eq = equilibria_2state(*jbar, phi)?;
        counts.push(eq.iter().filter(|p| p.kind == BranchKind::Nontrivial).count());
        points.extend(eq);
    }

    let mut saddle_nodes = Vec::new();
    for i in 1..grid.len() {
        if counts[i].abs_diff(counts[i - 1]) == 2 {
            let (mut lo, mut hi) = (grid[i - 1], grid[i]);
            let lo_count = counts[i - 1];
            while hi - lo > 1e-4 {
                let mid = 0.5 * (lo + hi);
                if count_nontrivial(mid)? == lo_count {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            saddle_nodes.push(0.5 * (lo + hi));
        }
    }

    let tc = phi.eval(1.0);
    let transcritical =
        (tc >= grid[0] && tc <= grid[grid.len() - 1]).then_some(tc);
    Ok(BifurcationDiagram {
        points,
        saddle_nodes,
        transcritical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phi() -> SigmoidParams {
        SigmoidParams::phi_default()
    }

    #[test]
    fn below_saddle_node_only_all_grass() {
        let eq = equilibria_2state(0.3, &phi()).unwrap();
        assert_eq!(eq.len(), 1);
        assert_eq!(eq[0].grass, 1.0);
        assert_eq!(eq[0].stability, Stability::Stable);
        assert_eq!(eq[0].kind, BranchKind::Trivial);
    }

    #[test]
    fn bistable_window_has_three_equilibria() {
        let eq = equilibria_2state(0.7, &phi()).unwrap();
        assert_eq!(eq.len(), 3, "{eq:?}");
        assert_eq!(eq[0].stability, Stability::Stable);
        assert!(eq[0].grass < 0.25, "forest-dominated root at {}", eq[0].grass);
        assert_eq!(eq[1].stability, Stability::Unstable);
        assert_eq!(eq[2].grass, 1.0);
        assert_eq!(eq[2].stability, Stability::Stable);
    }

    #[test]
    fn residuals_below_tolerance() {
        for jbar in [0.6, 0.8, 1.1, 1.5] {
            for p in equilibria_2state(jbar, &phi()).unwrap() {
                let r = (1.0 - p.grass) * (phi().eval(p.grass) - jbar * p.grass);
                assert!(r.abs() < 1e-10, "residual {r:.2e} at G = {}", p.grass);
            }
        }
    }

    #[test]
    fn trivial_branch_flips_at_transcritical() {
        let tc = phi().eval(1.0);
        let below = equilibria_2state(tc - 1e-3, &phi()).unwrap();
        let above = equilibria_2state(tc + 1e-3, &phi()).unwrap();
        let stab = |eq: &[EquilibriumPoint]| {
            eq.iter()
                .find(|p| p.kind == BranchKind::Trivial)
                .unwrap()
                .stability
        };
        assert_eq!(stab(&below), Stability::Stable);
        assert_eq!(stab(&above), Stability::Unstable);
    }

    #[test]
    fn sweep_locates_both_saddle_nodes_and_transcritical() {
        let grid: Vec<f64> = (1..=90).map(|i| 0.2 + i as f64 * 0.02).collect();
        let d = bifurcation_sweep(&grid, &phi()).unwrap();
        assert!(
            d.saddle_nodes.len() >= 2,
            "expected two saddle-nodes, got {:?}",
            d.saddle_nodes
        );
        let first = d.saddle_nodes[0];
        assert!((first - 0.55).abs() < 0.02, "first saddle-node at {first}");
        let tc = d.transcritical.unwrap();
        assert!((tc - 0.899995).abs() < 1e-3, "transcritical at {tc}");
        let second = d.saddle_nodes[1];
        assert!(second > tc, "second saddle-node {second} beyond transcritical");
    }
}
