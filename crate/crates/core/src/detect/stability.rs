//! Time-series stability detector: volatility metrics of the deviation
//! series and the dual-dimension hypothesis test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mean, quantile, variance};

/// The three stability metrics of one deviation window:
/// variance, maximum fluctuation amplitude, |first-order autocorrelation|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityMetrics {
    pub variance: f64,
    pub range: f64,
    pub autocorr_abs: f64,
}

impl StabilityMetrics {
    pub fn as_array(&self) -> [f64; 3] {
        [self.variance, self.range, self.autocorr_abs]
    }
}

/// Metric thresholds theta_1..theta_3 (variance, range, autocorrelation).
pub type Thresholds = [f64; 3];

/// Compute the stability metrics of a deviation sequence. The
/// autocorrelation of a constant sequence is defined as 0.
pub fn stability_metrics(series: &[f64]) -> Result<StabilityMetrics> {
    if series.len() < 2 {
        return Err(Error::invalid("stability metrics need at least two points"));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("deviation series must be finite"));
    }
    let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        // Constant sequence: exactly stable, autocorrelation by convention 0.
        return Ok(StabilityMetrics { variance: 0.0, range: 0.0, autocorr_abs: 0.0 });
    }
    let var = variance(series);
    let mu = mean(series);
    let denom: f64 = series.iter().map(|v| (v - mu) * (v - mu)).sum();
    let autocorr = if denom > 0.0 {
        let num: f64 = series.windows(2).map(|w| (w[0] - mu) * (w[1] - mu)).sum();
        num / denom
    } else {
        0.0
    };
    Ok(StabilityMetrics { variance: var, range: hi - lo, autocorr_abs: autocorr.abs() })
}

/// Outcome of the dual-dimension hypothesis test for one window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub metrics_similarity: StabilityMetrics,
    pub metrics_correlation: StabilityMetrics,
    /// Which metric indices breached in both dimensions simultaneously.
    pub breached: [bool; 3],
    /// True when any metric breached in both dimensions (the alternative
    /// hypothesis: the attribute is poisoned).
    pub poisoned: bool,
}

/// Shared-threshold decision: poisoned iff some metric exceeds its threshold
/// in the similarity AND the correlation dimension.
pub fn stability_decision(
    metrics_similarity: StabilityMetrics,
    metrics_correlation: StabilityMetrics,
    thresholds: Thresholds,
) -> StabilityVerdict {
    stability_decision_split(metrics_similarity, metrics_correlation, thresholds, thresholds)
}

/// Per-dimension-threshold variant of the same conjunctive test.
pub fn stability_decision_split(
    metrics_similarity: StabilityMetrics,
    metrics_correlation: StabilityMetrics,
    thresholds_similarity: Thresholds,
    thresholds_correlation: Thresholds,
) -> StabilityVerdict {
    let ms = metrics_similarity.as_array();
    let mc = metrics_correlation.as_array();
    let mut breached = [false; 3];
    for i in 0..3 {
        breached[i] = ms[i] > thresholds_similarity[i] && mc[i] > thresholds_correlation[i];
    }
    StabilityVerdict {
        metrics_similarity,
        metrics_correlation,
        breached,
        poisoned: breached.iter().any(|&b| b),
    }
}

/// Empirical thresholds: the q-quantile of each metric over benign windows.
pub fn calibrate_thresholds(benign: &[StabilityMetrics], q: f64) -> Result<Thresholds> {
    if benign.len() < 20 {
        return Err(Error::invalid(format!(
            "threshold calibration needs at least 20 benign windows, got {}",
            benign.len()
        )));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::config("quantile must lie in [0, 1]"));
    }
    let collect = |f: fn(&StabilityMetrics) -> f64| -> Vec<f64> { benign.iter().map(f).collect() };
    Ok([
        quantile(&collect(|m| m.variance), q),
        quantile(&collect(|m| m.range), q),
        quantile(&collect(|m| m.autocorr_abs), q),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_series_is_fully_stable() {
        let m = stability_metrics(&[0.4; 8]).unwrap();
        assert_eq!(m.as_array(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn range_is_max_minus_min() {
        let m = stability_metrics(&[1.0, 3.0, 2.0]).unwrap();
        assert_relative_eq!(m.range, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn autocorrelation_matches_hand_computation() {
        // [1,2,3,4,5]: lag-1 cross products 4 over squared deviations 10.
        let m = stability_metrics(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_relative_eq!(m.autocorr_abs, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn too_short_series_is_an_error() {
        assert!(stability_metrics(&[1.0]).is_err());
    }

    #[test]
    fn decision_requires_simultaneous_breach() {
        let z = StabilityMetrics { variance: 0.0, range: 0.0, autocorr_abs: 0.0 };
        let theta = [0.1, 0.1, 0.1];
        assert!(!stability_decision(z, z, theta).poisoned);

        let s = StabilityMetrics { variance: 0.2, range: 0.0, autocorr_abs: 0.0 };
        let c_low = StabilityMetrics { variance: 0.05, range: 0.0, autocorr_abs: 0.0 };
        assert!(!stability_decision(s, c_low, theta).poisoned);

        let c_high = StabilityMetrics { variance: 0.2, range: 0.0, autocorr_abs: 0.0 };
        let v = stability_decision(s, c_high, theta);
        assert!(v.poisoned);
        assert_eq!(v.breached, [true, false, false]);
    }

    #[test]
    fn decision_is_monotone_in_thresholds() {
        let s = StabilityMetrics { variance: 0.3, range: 0.5, autocorr_abs: 0.7 };
        let c = StabilityMetrics { variance: 0.25, range: 0.6, autocorr_abs: 0.65 };
        let mut last_poisoned = true;
        for step in 0..8 {
            let t = 0.1 + 0.1 * step as f64;
            let verdict = stability_decision(s, c, [t, t, t]);
            // once H0, raising thresholds further never flips back to H1
            if !last_poisoned {
                assert!(!verdict.poisoned);
            }
            last_poisoned = verdict.poisoned;
        }
    }

    #[test]
    fn calibration_is_the_quantile() {
        let benign: Vec<StabilityMetrics> = (1..=100)
            .map(|i| StabilityMetrics {
                variance: i as f64,
                range: 2.0 * i as f64,
                autocorr_abs: 0.5,
            })
            .collect();
        let t = calibrate_thresholds(&benign, 0.99).unwrap();
        assert_relative_eq!(t[0], 99.01, epsilon = 1e-9);
        assert_relative_eq!(t[1], 198.02, epsilon = 1e-9);
        assert_relative_eq!(t[2], 0.5, epsilon = 1e-12);

        // constant metrics -> threshold equals the constant
        let flat: Vec<StabilityMetrics> = (0..25)
            .map(|_| StabilityMetrics { variance: 3.0, range: 3.0, autocorr_abs: 3.0 })
            .collect();
        assert_eq!(calibrate_thresholds(&flat, 0.99).unwrap(), [3.0, 3.0, 3.0]);

        assert!(calibrate_thresholds(&benign[..19], 0.99).is_err());
    }
}
