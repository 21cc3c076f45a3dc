//! Temporal similarity detector: distance of observed statistics from a
//! historical band widened by the mechanism's fault tolerance.

use serde::{Deserialize, Serialize};

use crate::dataset::HistoryStore;
use crate::error::{Error, Result};
use crate::ldp::{windowed_sqr_series, LdpConfig, SqrValue};

/// Per-attribute acceptance band.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BaselineBand {
    Scalar { lo: f64, hi: f64 },
    /// One interval per category. The scalar tolerance budget is split
    /// evenly across categories so that per-category containment implies
    /// containment of the L1 deviation.
    PerCategory { intervals: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarityBaseline {
    pub bands: Vec<BaselineBand>,
    /// Tolerance alpha used per attribute.
    pub alphas: Vec<f64>,
}

impl SimilarityBaseline {
    pub fn from_bands(bands: Vec<BaselineBand>, alphas: Vec<f64>) -> Result<Self> {
        if bands.len() != alphas.len() {
            return Err(Error::invalid("one alpha per band required"));
        }
        for band in &bands {
            match band {
                BaselineBand::Scalar { lo, hi } => {
                    if lo > hi {
                        return Err(Error::invalid("band lower bound above upper bound"));
                    }
                }
                BaselineBand::PerCategory { intervals } => {
                    if intervals.iter().any(|(lo, hi)| lo > hi) {
                        return Err(Error::invalid("band lower bound above upper bound"));
                    }
                }
            }
        }
        Ok(SimilarityBaseline { bands, alphas })
    }
}

/// Build per-attribute bands from historical statistic series:
/// `[min over history - alpha, max over history + alpha]`, componentwise for
/// frequency statistics with an evenly split alpha.
pub fn build_similarity_baseline(
    hist_sqrs: &[Vec<SqrValue>],
    alphas: &[f64],
) -> Result<SimilarityBaseline> {
    if hist_sqrs.is_empty() || hist_sqrs.iter().any(|s| s.is_empty()) {
        return Err(Error::invalid("similarity baseline needs a non-empty history"));
    }
    if hist_sqrs.len() != alphas.len() {
        return Err(Error::invalid("one alpha per attribute required"));
    }
    let mut bands = Vec::with_capacity(hist_sqrs.len());
    for (series, &alpha) in hist_sqrs.iter().zip(alphas) {
        let band = match &series[0] {
            SqrValue::Mean(_) => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for v in series {
                    let m = v
                        .as_mean()
                        .ok_or_else(|| Error::invalid("mixed statistic kinds in one series"))?;
                    lo = lo.min(m);
                    hi = hi.max(m);
                }
                BaselineBand::Scalar { lo: lo - alpha, hi: hi + alpha }
            }
            SqrValue::Frequency(first) => {
                let k = first.len();
                let margin = alpha / k as f64;
                let mut lo = vec![f64::INFINITY; k];
                let mut hi = vec![f64::NEG_INFINITY; k];
                for v in series {
                    let h = v
                        .as_frequency()
                        .ok_or_else(|| Error::invalid("mixed statistic kinds in one series"))?;
                    for (x, &f) in h.iter().enumerate() {
                        lo[x] = lo[x].min(f);
                        hi[x] = hi[x].max(f);
                    }
                }
                BaselineBand::PerCategory {
                    intervals: lo
                        .into_iter()
                        .zip(hi)
                        .map(|(l, h)| (l - margin, h + margin))
                        .collect(),
                }
            }
        };
        bands.push(band);
    }
    SimilarityBaseline::from_bands(bands, alphas.to_vec())
}

/// Spec-level convenience: windowed statistic series straight from a history
/// store, with alpha taken from each mechanism's tolerance at the windowed
/// sample size. Uses the smallest device count across the stored datasets
/// (widest band) when they differ.
pub fn similarity_baseline_from_history(
    hist: &HistoryStore,
    cfgs: &[LdpConfig],
    window: usize,
    delta: f64,
) -> Result<SimilarityBaseline> {
    if hist.is_empty() {
        return Err(Error::invalid("similarity baseline needs a non-empty history"));
    }
    let min_devices = hist.datasets().iter().map(|d| d.n_devices()).min().unwrap();
    let mut series: Vec<Vec<SqrValue>> = vec![Vec::new(); cfgs.len()];
    for ds in hist.datasets() {
        for (j, cfg) in cfgs.iter().enumerate() {
            series[j].extend(windowed_sqr_series(ds, j, cfg, window)?);
        }
    }
    let alphas: Vec<f64> = cfgs
        .iter()
        .map(|cfg| {
            crate::ldp::mechanism_for(cfg)
                .and_then(|m| m.tolerance(min_devices * window, delta))
                .map(|t| t.alpha)
        })
        .collect::<Result<_>>()?;
    build_similarity_baseline(&series, &alphas)
}

/// L1 distance from a statistic to its band; zero inside.
pub fn similarity_deviation(sqr: &SqrValue, baseline: &SimilarityBaseline, attr: usize) -> f64 {
    match (&baseline.bands[attr], sqr) {
        (BaselineBand::Scalar { lo, hi }, SqrValue::Mean(v)) => (lo - v).max(v - hi).max(0.0),
        (BaselineBand::PerCategory { intervals }, SqrValue::Frequency(h)) => {
            assert_eq!(intervals.len(), h.len(), "histogram width differs from band");
            intervals
                .iter()
                .zip(h)
                .map(|((lo, hi), f)| (lo - f).max(f - hi).max(0.0))
                .sum()
        }
        _ => panic!("statistic kind does not match the baseline band"),
    }
}
