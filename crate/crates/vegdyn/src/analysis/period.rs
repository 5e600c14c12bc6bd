//! Period estimation from upward mean-crossings.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodEstimate {
    pub period: f64,
    pub n_crossings: usize,
    /// Largest relative deviation of a single spacing from the mean
    /// spacing; small values indicate a clean cycle.
    pub relative_spread: f64,
}

/// Estimate the period of a uniformly sampled scalar series as the mean
/// spacing of its upward mean-crossings. `None` with fewer than 3
/// crossings (constant series have none).
pub fn estimate_period(series: &[f64], dt: f64) -> Option<PeriodEstimate> {
    if series.len() < 3 || !(dt > 0.0) {
        return None;
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let mut crossings: Vec<f64> = Vec::new();
    for i in 1..series.len() {
        let (a, b) = (series[i - 1], series[i]);
        if a < mean && b >= mean {
            let frac = (mean - a) / (b - a);
            crossings.push(((i - 1) as f64 + frac) * dt);
        }
    }
    if crossings.len() < 3 {
        return None;
    }
    let spacings: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
    let period = spacings.iter().sum::<f64>() / spacings.len() as f64;
    let relative_spread = spacings
        .iter()
        .map(|s| (s - period).abs() / period)
        .fold(0.0, f64::max);
    Some(PeriodEstimate {
        period,
        n_crossings: crossings.len(),
        relative_spread,
    })
}

/// Centered moving average used to tame shot noise in empirical occupancy
/// series before crossing detection.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 {
        return series.to_vec();
    }
    let half = window / 2;
    (0..series.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(series.len());
            series[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_period_within_one_percent() {
        let t_max = 100.0;
        let dt = 0.01;
        let period = 7.3;
        let n = (t_max / dt) as usize;
        let series: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 * dt / period).sin())
            .collect();
        let est = estimate_period(&series, dt).unwrap();
        assert!(
            (est.period - period).abs() / period < 0.01,
            "estimated {}",
            est.period
        );
        assert!(est.relative_spread < 0.01);
    }

    #[test]
    fn constant_series_has_no_period() {
        assert_eq!(estimate_period(&[0.5; 1000], 0.1), None);
    }

    #[test]
    fn too_few_crossings_is_none() {
        // One and a half cycles: two upward crossings only.
        let dt = 0.01;
        let series: Vec<f64> = (0..150)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 * dt / 1.0).sin())
            .collect();
        assert_eq!(estimate_period(&series, dt), None);
    }

    #[test]
    fn moving_average_preserves_constants() {
        let s = vec![2.5; 50];
        assert_eq!(moving_average(&s, 7), s);
    }
}
