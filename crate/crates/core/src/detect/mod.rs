//! Attribute-level poisoning detection: temporal similarity, attribute
//! correlation, and time-series stability, combined into one pipeline.
//!
//! The pipeline aggregates device reports into trailing-window statistics,
//! scores each window position against a historical similarity band and
//! against correlation baselines, then tests the stability of both deviation
//! series per observation window. An attribute is flagged when enough
//! windows breach thresholds in both dimensions simultaneously.

mod correlation;
mod similarity;
mod stability;

pub use correlation::{
    build_correlation_baseline, cca_from_covariances, correlation_deviation, estimate_pair,
    point_biserial_composite, sparse_cca, weighted_pearson, window_slices, CorrelationBaseline,
    EstimatorTag, PairBaseline, SqrSeries, WeightMode,
};
pub use similarity::{
    build_similarity_baseline, similarity_baseline_from_history, similarity_deviation,
    BaselineBand, SimilarityBaseline,
};
pub use stability::{
    calibrate_thresholds, stability_decision, stability_decision_split, stability_metrics,
    StabilityMetrics, StabilityVerdict, Thresholds,
};

use serde::{Deserialize, Serialize};

use crate::dataset::{Provenance, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::ldp::{
    mechanism_for, perturb_dataset, windowed_sqr_series, LdpConfig, SqrValue, ToleranceBound,
};
use crate::rng::derive_seed;

/// Detector-stage parameters. `delta` is the detector's own confidence knob
/// (tolerance alpha and bootstrap bands), deliberately separate from the
/// mechanism-level confidence used for reporting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Window length (correlation windows, stability windows, and the
    /// trailing statistic aggregation).
    pub window: usize,
    /// Bootstrap resample count.
    pub bootstrap: usize,
    /// Detector confidence for tolerance margins and bootstrap bands.
    pub delta: f64,
    /// Sparsity penalty of the CCA path.
    pub lambda: f64,
    /// Threshold calibration quantile.
    pub quantile: f64,
    #[serde(default)]
    pub weight_mode: WeightMode,
    /// Calibrate thresholds per dimension instead of pooling both.
    #[serde(default)]
    pub per_dimension_thresholds: bool,
    /// Stability windows that must reject before an attribute is flagged.
    pub min_breaches: usize,
    /// Perturbation replicates of the calibration segment used to collect
    /// benign windows (raised automatically until 20 windows exist).
    pub calibration_replicates: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            window: 12,
            bootstrap: 200,
            delta: 0.9,
            lambda: 0.1,
            quantile: 0.99,
            weight_mode: WeightMode::Variance,
            per_dimension_thresholds: false,
            min_breaches: 2,
            calibration_replicates: 3,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 {
            return Err(Error::config("window must be at least 3"));
        }
        if self.bootstrap < 100 {
            return Err(Error::config("at least 100 bootstrap resamples required"));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::config("delta must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.quantile) {
            return Err(Error::config("quantile must lie in [0, 1]"));
        }
        if self.lambda < 0.0 {
            return Err(Error::config("lambda must be nonnegative"));
        }
        if self.min_breaches == 0 {
            return Err(Error::config("min_breaches must be at least 1"));
        }
        if self.calibration_replicates == 0 {
            return Err(Error::config("at least one calibration replicate required"));
        }
        Ok(())
    }
}

/// Similarity and correlation deviation sequences of one attribute, aligned
/// per window position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviationSeries {
    pub lambda_s: Vec<f64>,
    pub lambda_c: Vec<f64>,
}

impl DeviationSeries {
    pub fn new(lambda_s: Vec<f64>, lambda_c: Vec<f64>) -> Result<Self> {
        if lambda_s.len() != lambda_c.len() {
            return Err(Error::invalid("deviation sequences must be aligned"));
        }
        if lambda_s.iter().any(|v| !v.is_finite() || *v < 0.0)
            || lambda_c.iter().any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::invalid("deviation values must be finite and nonnegative"));
        }
        Ok(DeviationSeries { lambda_s, lambda_c })
    }

    pub fn len(&self) -> usize {
        self.lambda_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda_s.is_empty()
    }
}

/// Per-window stability outcome in the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowDecision {
    pub start: usize,
    pub metrics_s: [f64; 3],
    pub metrics_c: [f64; 3],
    pub h1: bool,
}

/// Detection outcome of one attribute.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributeReport {
    pub name: String,
    pub lambda_s: Vec<f64>,
    pub lambda_c: Vec<f64>,
    pub metrics_s: Vec<[f64; 3]>,
    pub metrics_c: Vec<[f64; 3]>,
    pub windows: Vec<WindowDecision>,
    pub thresholds: ThresholdSet,
    /// "h1" when the stability stage rejected often enough, else "h0".
    pub verdict: String,
    pub flagged: bool,
    pub tolerance: ToleranceBound,
    /// Mean correlation boundary violation, used for the argmax attribute.
    pub mean_lambda_c: f64,
    pub skipped_pairs: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub similarity: Thresholds,
    pub correlation: Thresholds,
}

/// Full detection report; serializes to the stable JSON artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionReport {
    pub attributes: Vec<AttributeReport>,
    /// Attribute with the maximum mean boundary violation.
    pub argmax_attribute: usize,
    /// All attributes whose verdict is h1.
    pub flagged: Vec<usize>,
    pub quantile: f64,
}

/// Baselines plus calibrated thresholds, ready to score observations.
#[derive(Debug, Clone)]
pub struct DetectionPipeline {
    params: DetectorParams,
    cfgs: Vec<LdpConfig>,
    similarity: SimilarityBaseline,
    correlation: CorrelationBaseline,
    thresholds_s: Thresholds,
    thresholds_c: Thresholds,
    tolerances: Vec<ToleranceBound>,
}

impl DetectionPipeline {
    /// Build baselines from clean raw history and calibrate thresholds on
    /// perturbation replicates of a clean raw calibration segment.
    pub fn build(
        history_raw: &TimeSeriesDataset,
        calibration_raw: &TimeSeriesDataset,
        cfgs: &[LdpConfig],
        params: &DetectorParams,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        for cfg in cfgs {
            cfg.validate()?;
        }
        if history_raw.stage_history().contains(&Provenance::Poisoned)
            || calibration_raw.stage_history().contains(&Provenance::Poisoned)
        {
            return Err(Error::invalid("baselines must be built from unpoisoned data"));
        }
        let w = params.window;
        let n = history_raw.n_devices();

        // Similarity band: clean raw statistics, widened by the tolerance of
        // the windowed perturbed statistic at the detector's confidence.
        let mut hist_sqrs = Vec::with_capacity(cfgs.len());
        let mut tolerances = Vec::with_capacity(cfgs.len());
        for (j, cfg) in cfgs.iter().enumerate() {
            hist_sqrs.push(windowed_sqr_series(history_raw, j, cfg, w)?);
            tolerances.push(mechanism_for(cfg)?.tolerance(n * w, params.delta)?);
        }
        let alphas: Vec<f64> = tolerances.iter().map(|t| t.alpha).collect();
        let similarity = build_similarity_baseline(&hist_sqrs, &alphas)?;

        // Correlation baselines: perturbed clean history, matching the noise
        // regime of observations.
        let hist_perturbed =
            perturb_dataset(history_raw, cfgs, derive_seed(seed, "detect/hist", &[]))?;
        let mut hist_series = Vec::with_capacity(cfgs.len());
        for (j, cfg) in cfgs.iter().enumerate() {
            hist_series.push(SqrSeries::from_values(&windowed_sqr_series(
                &hist_perturbed,
                j,
                cfg,
                w,
            )?)?);
        }
        let correlation = build_correlation_baseline(
            &hist_series,
            w,
            params.bootstrap,
            params.delta,
            params.lambda,
            params.weight_mode,
            derive_seed(seed, "detect/boot", &[]),
        )?;

        let mut pipeline = DetectionPipeline {
            params: params.clone(),
            cfgs: cfgs.to_vec(),
            similarity,
            correlation,
            thresholds_s: [0.0; 3],
            thresholds_c: [0.0; 3],
            tolerances,
        };

        // Benign windows from perturbation replicates of the calibration
        // segment; replicate count grows until 20 windows exist.
        let chunk = w + 1;
        let usable = pipeline.deviation_len(calibration_raw.n_times())?;
        let per_replicate = (usable / chunk).max(1) * cfgs.len();
        let needed = 20usize.div_ceil(per_replicate);
        let replicates = params.calibration_replicates.max(needed);
        let mut pool_s = Vec::new();
        let mut pool_c = Vec::new();
        for r in 0..replicates {
            let benign = perturb_dataset(
                calibration_raw,
                cfgs,
                derive_seed(seed, "detect/cal", &[r as u64]),
            )?;
            let devs = pipeline.deviation_series(&benign)?;
            for dev in &devs {
                for (ms, mc) in pipeline.window_metrics(dev)? {
                    pool_s.push(ms);
                    pool_c.push(mc);
                }
            }
        }
        if params.per_dimension_thresholds {
            pipeline.thresholds_s = calibrate_thresholds(&pool_s, params.quantile)?;
            pipeline.thresholds_c = calibrate_thresholds(&pool_c, params.quantile)?;
        } else {
            let mut pooled = pool_s;
            pooled.extend(pool_c);
            let shared = calibrate_thresholds(&pooled, params.quantile)?;
            pipeline.thresholds_s = shared;
            pipeline.thresholds_c = shared;
        }
        Ok(pipeline)
    }

    pub fn params(&self) -> &DetectorParams {
        &self.params
    }

    pub fn similarity_baseline(&self) -> &SimilarityBaseline {
        &self.similarity
    }

    pub fn correlation_baseline(&self) -> &CorrelationBaseline {
        &self.correlation
    }

    pub fn thresholds(&self) -> (Thresholds, Thresholds) {
        (self.thresholds_s, self.thresholds_c)
    }

    /// Length of the aligned deviation series for a given observation length.
    fn deviation_len(&self, n_times: usize) -> Result<usize> {
        let w = self.params.window;
        if n_times < 2 * w {
            return Err(Error::invalid(format!(
                "observation of {n_times} instances too short for window {w}"
            )));
        }
        // windowed statistics: n_times - w + 1 positions; the correlation
        // window consumes another w - 1.
        Ok(n_times - 2 * (w - 1))
    }

    /// Aligned deviation series per attribute for a perturbed observation.
    pub fn deviation_series(&self, observed: &TimeSeriesDataset) -> Result<Vec<DeviationSeries>> {
        if !observed.stage_history().contains(&Provenance::Perturbed) {
            return Err(Error::invalid("detection operates on perturbed observations"));
        }
        if observed.n_attributes() != self.cfgs.len() {
            return Err(Error::invalid("observation shape differs from the baseline"));
        }
        let w = self.params.window;
        let usable = self.deviation_len(observed.n_times())?;

        let mut windowed: Vec<Vec<SqrValue>> = Vec::with_capacity(self.cfgs.len());
        for (j, cfg) in self.cfgs.iter().enumerate() {
            windowed.push(windowed_sqr_series(observed, j, cfg, w)?);
        }
        let series: Vec<SqrSeries> = windowed
            .iter()
            .map(|v| SqrSeries::from_values(v))
            .collect::<Result<_>>()?;

        let mut out = Vec::with_capacity(self.cfgs.len());
        for j in 0..self.cfgs.len() {
            let mut lambda_s = Vec::with_capacity(usable);
            let mut lambda_c = Vec::with_capacity(usable);
            for pos in 0..usable {
                let tau = pos + w - 1; // index into the windowed series
                lambda_s.push(similarity_deviation(&windowed[j][tau], &self.similarity, j));
                let obs = window_slices(&series, tau + 1 - w, w);
                let (lc, _, _) = correlation_deviation(&obs, &self.correlation, j)?;
                lambda_c.push(lc);
            }
            out.push(DeviationSeries::new(lambda_s, lambda_c)?);
        }
        Ok(out)
    }

    /// Stability metric pairs over non-overlapping windows of the deviation
    /// series (window + 1 points each).
    pub fn window_metrics(
        &self,
        dev: &DeviationSeries,
    ) -> Result<Vec<(StabilityMetrics, StabilityMetrics)>> {
        let chunk = self.params.window + 1;
        let n = dev.len() / chunk;
        if n == 0 {
            return Err(Error::invalid("deviation series shorter than one stability window"));
        }
        let mut out = Vec::with_capacity(n);
        for c in 0..n {
            let r = c * chunk..(c + 1) * chunk;
            out.push((
                stability_metrics(&dev.lambda_s[r.clone()])?,
                stability_metrics(&dev.lambda_c[r])?,
            ));
        }
        Ok(out)
    }

    /// Score a perturbed observation and produce the detection report.
    pub fn detect(&self, observed: &TimeSeriesDataset) -> Result<DetectionReport> {
        let devs = self.deviation_series(observed)?;
        let chunk = self.params.window + 1;
        let mut attributes = Vec::with_capacity(devs.len());
        let mut flagged = Vec::new();
        for (j, dev) in devs.iter().enumerate() {
            let metrics = self.window_metrics(dev)?;
            let effective_breaches = self.params.min_breaches.min(metrics.len());
            let mut windows = Vec::with_capacity(metrics.len());
            let mut h1_count = 0usize;
            let mut metrics_s = Vec::with_capacity(metrics.len());
            let mut metrics_c = Vec::with_capacity(metrics.len());
            for (c, (ms, mc)) in metrics.iter().enumerate() {
                let verdict =
                    stability_decision_split(*ms, *mc, self.thresholds_s, self.thresholds_c);
                if verdict.poisoned {
                    h1_count += 1;
                }
                metrics_s.push(ms.as_array());
                metrics_c.push(mc.as_array());
                windows.push(WindowDecision {
                    start: c * chunk,
                    metrics_s: ms.as_array(),
                    metrics_c: mc.as_array(),
                    h1: verdict.poisoned,
                });
            }
            let is_flagged = h1_count >= effective_breaches;
            if is_flagged {
                flagged.push(j);
            }
            let mean_lambda_c =
                dev.lambda_c.iter().sum::<f64>() / dev.lambda_c.len().max(1) as f64;
            attributes.push(AttributeReport {
                name: observed.attributes()[j].clone(),
                lambda_s: dev.lambda_s.clone(),
                lambda_c: dev.lambda_c.clone(),
                metrics_s,
                metrics_c,
                windows,
                thresholds: ThresholdSet {
                    similarity: self.thresholds_s,
                    correlation: self.thresholds_c,
                },
                verdict: if is_flagged { "h1".into() } else { "h0".into() },
                flagged: is_flagged,
                tolerance: self.tolerances[j],
                mean_lambda_c,
                skipped_pairs: self
                    .correlation
                    .pairs
                    .iter()
                    .filter(|p| (p.a == j || p.b == j) && !p.computable)
                    .count(),
            });
        }
        let argmax_attribute = attributes
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.mean_lambda_c.partial_cmp(&b.mean_lambda_c).unwrap())
            .map(|(j, _)| j)
            .unwrap_or(0);
        Ok(DetectionReport {
            attributes,
            argmax_attribute,
            flagged,
            quantile: self.params.quantile,
        })
    }
}
