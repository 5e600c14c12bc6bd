//! Event logs, snapshots, and occupancy series.

use crate::error::{Error, Result};
use crate::model::StateId;

/// One jump of the site system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub site: u32,
    pub from: u8,
    pub to: u8,
}

/// Time-ordered event log plus everything needed to replay it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub events: Vec<Event>,
    pub t_end: f64,
    pub initial_states: Vec<StateId>,
    pub positions: Vec<f64>,
    pub n_states: usize,
    /// Absorption time, when the system froze before `t_end`.
    pub absorbed: Option<f64>,
}

impl Trajectory {
    /// Replay events up to and including time `t`.
    pub fn states_at(&self, t: f64) -> Vec<StateId> {
        let mut s = self.initial_states.clone();
        for e in &self.events {
            if e.t > t {
                break;
            }
            s[e.site as usize] = e.to as StateId;
        }
        s
    }

    pub fn final_states(&self) -> Vec<StateId> {
        self.states_at(f64::INFINITY)
    }

    /// Per-time, per-bin fraction of sites in each state. Without bins the
    /// whole domain is one bin. Empty bins report `None`, not zero.
    pub fn occupancy(&self, times: &[f64], bins: Option<&[f64]>) -> Result<OccupancySeries> {
        for &t in times {
            if t < 0.0 || t > self.t_end + 1e-9 {
                return Err(Error::TimeOutOfRange {
                    t,
                    t_max: self.t_end,
                });
            }
        }
        let edges: Vec<f64> = match bins {
            Some(e) if e.len() >= 2 => e.to_vec(),
            Some(_) => {
                return Err(Error::InvalidInput(
                    "spatial binning needs at least 2 edges".into(),
                ))
            }
            None => vec![f64::NEG_INFINITY, f64::INFINITY],
        };
        let n_bins = edges.len() - 1;
        let bin_of = |pos: f64| -> Option<usize> {
            if pos < edges[0] || pos >= edges[n_bins] {
                return None;
            }
            Some(
                edges
                    .windows(2)
                    .position(|w| pos >= w[0] && pos < w[1])
                    .unwrap_or(n_bins - 1),
            )
        };

        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|a, b| times[*a].partial_cmp(&times[*b]).unwrap());

        let mut states = self.initial_states.clone();
        let mut next_event = 0;
        let mut values = vec![vec![None; n_bins]; times.len()];
        for idx in order {
            let t = times[idx];
            while next_event < self.events.len() && self.events[next_event].t <= t {
                let e = &self.events[next_event];
                states[e.site as usize] = e.to as StateId;
                next_event += 1;
            }
            let mut counts = vec![vec![0usize; self.n_states]; n_bins];
            let mut totals = vec![0usize; n_bins];
            for (pos, st) in self.positions.iter().zip(&states) {
                if let Some(b) = bin_of(*pos) {
                    counts[b][*st] += 1;
                    totals[b] += 1;
                }
            }
            for b in 0..n_bins {
                if totals[b] > 0 {
                    values[idx][b] = Some(
                        counts[b]
                            .iter()
                            .map(|c| *c as f64 / totals[b] as f64)
                            .collect(),
                    );
                }
            }
        }
        Ok(OccupancySeries {
            times: times.to_vec(),
            edges: bins.map(<[f64]>::to_vec),
            values,
        })
    }

    /// CSV export: `t,site,from,to` (state labels resolved by the caller's
    /// label table).
    pub fn write_events_csv<W: std::io::Write>(
        &self,
        labels: &[String],
        mut w: W,
    ) -> Result<()> {
        writeln!(w, "t,site,from,to")?;
        for e in &self.events {
            writeln!(
                w,
                "{},{},{},{}",
                e.t, e.site, labels[e.from as usize], labels[e.to as usize]
            )?;
        }
        Ok(())
    }
}

/// Occupancy fractions per time and spatial bin.
#[derive(Debug, Clone)]
pub struct OccupancySeries {
    pub times: Vec<f64>,
    /// Bin edges, when binned.
    pub edges: Option<Vec<f64>>,
    /// `values[time][bin]` is `None` for empty bins, else the per-state
    /// fractions (summing to 1).
    pub values: Vec<Vec<Option<Vec<f64>>>>,
}

impl OccupancySeries {
    /// Whole-domain fractions at time index `i` (single-bin series).
    pub fn fractions(&self, i: usize) -> Option<&Vec<f64>> {
        self.values[i][0].as_ref()
    }
}

/// A simulation run: the event log plus state snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub trajectory: Trajectory,
    pub snapshot_times: Vec<f64>,
    pub snapshots: Vec<Vec<StateId>>,
}

impl SimOutput {
    /// Per-state fractions at each snapshot.
    pub fn snapshot_fractions(&self, n_states: usize) -> Vec<Vec<f64>> {
        self.snapshots
            .iter()
            .map(|s| {
                let mut c = vec![0usize; n_states];
                for st in s {
                    c[*st] += 1;
                }
                c.iter().map(|v| *v as f64 / s.len() as f64).collect()
            })
            .collect()
    }

    /// CSV export: `t,site,pos,state`.
    pub fn write_snapshots_csv<W: std::io::Write>(
        &self,
        labels: &[String],
        mut w: W,
    ) -> Result<()> {
        writeln!(w, "t,site,pos,state")?;
        for (t, snap) in self.snapshot_times.iter().zip(&self.snapshots) {
            for (site, st) in snap.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{}",
                    t, site, self.trajectory.positions[site], labels[*st]
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_site_traj() -> Trajectory {
        Trajectory {
            events: vec![Event {
                t: 5.0,
                site: 1,
                from: 0,
                to: 1,
            }],
            t_end: 10.0,
            initial_states: vec![0, 0],
            positions: vec![0.2, 0.8],
            n_states: 2,
            absorbed: None,
        }
    }

    #[test]
    fn occupancy_steps_at_event() {
        let tr = two_site_traj();
        let occ = tr.occupancy(&[0.0, 4.999, 5.0, 10.0], None).unwrap();
        assert_eq!(occ.fractions(0).unwrap()[1], 0.0);
        assert_eq!(occ.fractions(1).unwrap()[1], 0.0);
        assert_eq!(occ.fractions(2).unwrap()[1], 0.5);
        assert_eq!(occ.fractions(3).unwrap()[1], 0.5);
    }

    #[test]
    fn all_grass_occupancy_constant() {
        let tr = Trajectory {
            events: vec![],
            t_end: 7.0,
            initial_states: vec![0; 5],
            positions: vec![0.0; 5],
            n_states: 2,
            absorbed: Some(0.0),
        };
        let occ = tr.occupancy(&[0.0, 3.0, 7.0], None).unwrap();
        for i in 0..3 {
            assert_eq!(occ.fractions(i).unwrap(), &vec![1.0, 0.0]);
        }
    }

    #[test]
    fn empty_bin_is_missing() {
        let tr = two_site_traj();
        let occ = tr
            .occupancy(&[0.0], Some(&[0.0, 0.5, 0.6, 1.0]))
            .unwrap();
        assert!(occ.values[0][0].is_some());
        assert!(occ.values[0][1].is_none(), "no site lives in [0.5, 0.6)");
        assert!(occ.values[0][2].is_some());
    }

    #[test]
    fn occupancy_rejects_out_of_range_times() {
        let tr = two_site_traj();
        assert!(tr.occupancy(&[11.0], None).is_err());
    }

    #[test]
    fn replay_reaches_final_state() {
        let tr = two_site_traj();
        assert_eq!(tr.final_states(), vec![0, 1]);
    }
}
