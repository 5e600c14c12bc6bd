//! Front tracking and wave-speed estimation for 1D profiles.

use crate::error::{Error, Result};

/// Leftmost crossing of the profile through `threshold`, linearly
/// interpolated between nodes. `None` when the profile never crosses.
/// Nodes with non-finite values (e.g. empty occupancy bins) are skipped.
pub fn front_position(xs: &[f64], values: &[f64], threshold: f64) -> Result<Option<f64>> {
    if xs.len() != values.len() {
        return Err(Error::LengthMismatch {
            expected: xs.len(),
            got: values.len(),
        });
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidInput(format!(
            "front threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let mut prev: Option<(f64, f64)> = None;
    for (x, v) in xs.iter().zip(values) {
        if !v.is_finite() {
            continue;
        }
        if let Some((px, pv)) = prev {
            if (pv - threshold) * (v - threshold) < 0.0 {
                let t = (threshold - pv) / (v - pv);
                return Ok(Some(px + t * (x - px)));
            }
            if pv == threshold {
                return Ok(Some(px));
            }
        }
        prev = Some((*x, *v));
    }
    Ok(None)
}

/// Least-squares slope of front position against time. Positive means the
/// tracked species expands rightward. `None` with fewer than 2 valid
/// positions.
pub fn wave_speed(times: &[f64], positions: &[Option<f64>]) -> Result<Option<f64>> {
    if times.len() != positions.len() {
        return Err(Error::LengthMismatch {
            expected: times.len(),
            got: positions.len(),
        });
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(positions)
        .filter_map(|(t, p)| p.map(|p| (*t, p)))
        .collect();
    if pts.len() < 2 {
        return Ok(None);
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|(t, _)| t).sum::<f64>() / n;
    let pm = pts.iter().map(|(_, p)| p).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|(t, _)| (t - tm) * (t - tm)).sum();
    if sxx == 0.0 {
        return Ok(None);
    }
    let sxy: f64 = pts.iter().map(|(t, p)| (t - tm) * (p - pm)).sum();
    Ok(Some(sxy / sxx))
}
