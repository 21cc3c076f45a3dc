//! Latent-bias feature mining: repeated random sub-sampling of the device
//! population with the scored device forced into every sub-sample, a bias
//! statistic per sub-sample, and aggregation into one scalar per (device,
//! time). Columns over a window form the n x l feature matrix.
//!
//! Sub-sampling is keyed by device name rather than row position, so
//! permuting device order permutes matrix rows identically.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{AttributeKind, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};
use crate::stats::{mean, median, variance};

/// A bias statistic computed on one sub-sample for one device.
pub trait BiasFeature: Send + Sync {
    fn name(&self) -> &'static str;
    /// `device_value` is the scored device's report; `sample` always
    /// contains it.
    fn compute(
        &self,
        device_value: f64,
        sample: &[f64],
        reference: &ReferenceStats,
        kind: &AttributeKind,
    ) -> f64;
}

pub fn feature_names() -> &'static [&'static str] {
    &[
        "mean",
        "median",
        "variance",
        "mae",
        "kl",
        "sqr-bias",
        "ht-bias-stratified",
        "ht-bias-unstratified",
        "individual-variance",
    ]
}

/// Build a bias feature by registry name.
pub fn create_feature(name: &str) -> Result<Box<dyn BiasFeature>> {
    match name {
        "mean" => Ok(Box::new(MeanBias)),
        "median" => Ok(Box::new(MedianBias)),
        "variance" => Ok(Box::new(VarianceBias)),
        "mae" => Ok(Box::new(MaeBias)),
        "kl" => Ok(Box::new(KlBias)),
        "sqr-bias" => Ok(Box::new(SqrBias)),
        "ht-bias-stratified" | "ht-bias-unstratified" => Ok(Box::new(HtBias)),
        "individual-variance" => Ok(Box::new(IndividualVariance)),
        other => Err(Error::config(format!(
            "unknown bias feature {other:?}; known: {:?}",
            feature_names()
        ))),
    }
}

/// Reference statistics of the clean perturbed history for one attribute.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceStats {
    pub mean: f64,
    pub std: f64,
    /// Category frequencies (discrete) or binned frequencies (continuous).
    pub histogram: Vec<f64>,
    /// Binning range for continuous histograms.
    pub bin_lo: f64,
    pub bin_hi: f64,
}

pub const HISTOGRAM_BINS: usize = 10;

impl ReferenceStats {
    pub fn from_reports(values: &[f64], kind: &AttributeKind) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("reference statistics need at least one report"));
        }
        let m = mean(values);
        let s = variance(values).sqrt();
        match kind {
            AttributeKind::Discrete { categories } => {
                let mut hist = vec![0.0; categories.len()];
                for &v in values {
                    let c = (v as usize).min(categories.len() - 1);
                    hist[c] += 1.0;
                }
                let n = values.len() as f64;
                hist.iter_mut().for_each(|h| *h /= n);
                Ok(ReferenceStats { mean: m, std: s, histogram: hist, bin_lo: 0.0, bin_hi: 0.0 })
            }
            AttributeKind::Continuous { .. } => {
                let spread = if s > 0.0 { 4.0 * s } else { 1.0 };
                let (lo, hi) = (m - spread, m + spread);
                let hist = bin_histogram(values, lo, hi);
                Ok(ReferenceStats { mean: m, std: s, histogram: hist, bin_lo: lo, bin_hi: hi })
            }
        }
    }

    fn sample_histogram(&self, sample: &[f64], kind: &AttributeKind) -> Vec<f64> {
        match kind {
            AttributeKind::Discrete { categories } => {
                let mut hist = vec![0.0; categories.len()];
                for &v in sample {
                    let c = (v as usize).min(categories.len() - 1);
                    hist[c] += 1.0;
                }
                let n = sample.len() as f64;
                hist.iter_mut().for_each(|h| *h /= n);
                hist
            }
            AttributeKind::Continuous { .. } => bin_histogram(sample, self.bin_lo, self.bin_hi),
        }
    }
}

fn bin_histogram(values: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mut hist = vec![0.0; HISTOGRAM_BINS];
    let width = (hi - lo).max(1e-12);
    for &v in values {
        let b = (((v - lo) / width * HISTOGRAM_BINS as f64) as isize)
            .clamp(0, HISTOGRAM_BINS as isize - 1) as usize;
        hist[b] += 1.0;
    }
    let n = values.len() as f64;
    hist.iter_mut().for_each(|h| *h /= n);
    hist
}

/// KL divergence with an additive floor against empty categories.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    const FLOOR: f64 = 1e-6;
    let fix = |h: &[f64]| -> Vec<f64> {
        let raised: Vec<f64> = h.iter().map(|&x| x + FLOOR).collect();
        let s: f64 = raised.iter().sum();
        raised.into_iter().map(|x| x / s).collect()
    };
    let p = fix(p);
    let q = fix(q);
    p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum()
}

struct MeanBias;
impl BiasFeature for MeanBias {
    fn name(&self) -> &'static str {
        "mean"
    }
    fn compute(&self, d: f64, sample: &[f64], _r: &ReferenceStats, _k: &AttributeKind) -> f64 {
        d - mean(sample)
    }
}

struct MedianBias;
impl BiasFeature for MedianBias {
    fn name(&self) -> &'static str {
        "median"
    }
    fn compute(&self, d: f64, sample: &[f64], _r: &ReferenceStats, _k: &AttributeKind) -> f64 {
        d - median(sample)
    }
}

struct VarianceBias;
impl BiasFeature for VarianceBias {
    fn name(&self) -> &'static str {
        "variance"
    }
    fn compute(&self, d: f64, sample: &[f64], _r: &ReferenceStats, _k: &AttributeKind) -> f64 {
        let m = mean(sample);
        ((d - m) * (d - m) - variance(sample)).abs()
    }
}

struct MaeBias;
impl BiasFeature for MaeBias {
    fn name(&self) -> &'static str {
        "mae"
    }
    fn compute(&self, d: f64, sample: &[f64], _r: &ReferenceStats, _k: &AttributeKind) -> f64 {
        sample.iter().map(|x| (d - x).abs()).sum::<f64>() / sample.len() as f64
    }
}

struct KlBias;
impl BiasFeature for KlBias {
    fn name(&self) -> &'static str {
        "kl"
    }
    fn compute(&self, _d: f64, sample: &[f64], r: &ReferenceStats, k: &AttributeKind) -> f64 {
        kl_divergence(&r.sample_histogram(sample, k), &r.histogram)
    }
}

struct SqrBias;
impl BiasFeature for SqrBias {
    fn name(&self) -> &'static str {
        "sqr-bias"
    }
    fn compute(&self, _d: f64, sample: &[f64], r: &ReferenceStats, k: &AttributeKind) -> f64 {
        match k {
            AttributeKind::Continuous { .. } => (mean(sample) - r.mean).abs(),
            AttributeKind::Discrete { .. } => {
                let hist = r.sample_histogram(sample, k);
                hist.iter().zip(&r.histogram).map(|(a, b)| (a - b).abs()).sum()
            }
        }
    }
}

struct HtBias;
impl BiasFeature for HtBias {
    fn name(&self) -> &'static str {
        "ht-bias"
    }
    fn compute(&self, _d: f64, sample: &[f64], r: &ReferenceStats, _k: &AttributeKind) -> f64 {
        // One-sample z statistic of the sub-sample mean against the
        // historical reference mean.
        let se = r.std.max(1e-9) / (sample.len() as f64).sqrt();
        (mean(sample) - r.mean) / se
    }
}

struct IndividualVariance;
impl BiasFeature for IndividualVariance {
    fn name(&self) -> &'static str {
        "individual-variance"
    }
    fn compute(&self, d: f64, sample: &[f64], _r: &ReferenceStats, _k: &AttributeKind) -> f64 {
        let m = mean(sample);
        (d - m) * (d - m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasFeatureSpec {
    /// Registry name of the bias feature.
    pub feature: String,
    /// Independent sub-sampling operations per (device, time).
    pub samples: usize,
    /// Fraction of the device population per sub-sample.
    pub fraction: f64,
    #[serde(default)]
    pub aggregation: Aggregation,
    /// When false, the matrix carries the raw reports instead (ablation
    /// baseline without the sampling enhancement).
    #[serde(default = "default_true")]
    pub enhanced: bool,
}

fn default_true() -> bool {
    true
}

impl Default for BiasFeatureSpec {
    fn default() -> Self {
        BiasFeatureSpec {
            feature: "mean".into(),
            samples: 20,
            fraction: 0.5,
            aggregation: Aggregation::Mean,
            enhanced: true,
        }
    }
}

impl BiasFeatureSpec {
    pub fn validate(&self) -> Result<()> {
        create_feature(&self.feature)?;
        if self.samples == 0 {
            return Err(Error::config("at least one sub-sample required"));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::config("sub-sample fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// n devices x window-width feature matrix, rows in device order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasFeatureMatrix {
    pub feature: String,
    pub window_start: usize,
    pub n_devices: usize,
    pub width: usize,
    /// Row-major (device, column).
    pub values: Vec<f64>,
    pub labels: Option<Vec<bool>>,
}

impl BiasFeatureMatrix {
    pub fn value(&self, device: usize, col: usize) -> f64 {
        self.values[device * self.width + col]
    }

    pub fn row(&self, device: usize) -> &[f64] {
        &self.values[device * self.width..(device + 1) * self.width]
    }

    pub fn with_labels(mut self, labels: Vec<bool>) -> Result<Self> {
        if labels.len() != self.n_devices {
            return Err(Error::invalid("one label per device required"));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// CSV with a header naming the feature kind and window.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# feature: {}, window_start: {}, width: {}\n",
            self.feature, self.window_start, self.width
        );
        out.push_str("device");
        for c in 0..self.width {
            out.push_str(&format!(",f{c}"));
        }
        if self.labels.is_some() {
            out.push_str(",label");
        }
        out.push('\n');
        for i in 0..self.n_devices {
            out.push_str(&i.to_string());
            for c in 0..self.width {
                out.push_str(&format!(",{}", self.value(i, c)));
            }
            if let Some(labels) = &self.labels {
                out.push_str(if labels[i] { ",1" } else { ",0" });
            }
            out.push('\n');
        }
        out
    }
}

/// Mine the n x width bias-feature matrix for one attribute over a time
/// window of a perturbed dataset.
pub fn mine_features(
    ds: &TimeSeriesDataset,
    attr: usize,
    window: Range<usize>,
    spec: &BiasFeatureSpec,
    reference: &ReferenceStats,
    seed: u64,
) -> Result<BiasFeatureMatrix> {
    spec.validate()?;
    if attr >= ds.n_attributes() {
        return Err(Error::invalid("attribute out of range"));
    }
    if window.end > ds.n_times() || window.is_empty() {
        return Err(Error::invalid("feature window out of range"));
    }
    let n = ds.n_devices();
    let width = window.len();
    let kind = ds.kind(attr).clone();
    let feature = create_feature(&spec.feature)?;
    let sample_size = (spec.fraction * n as f64).round() as usize;
    if spec.enhanced && sample_size == 0 {
        return Err(Error::config(format!(
            "sub-sample fraction {} of {n} devices rounds to zero",
            spec.fraction
        )));
    }
    let with_replacement = spec.feature == "ht-bias-unstratified";

    // Name-keyed device order makes sampling permutation-equivariant.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ds.devices()[a].cmp(&ds.devices()[b]));

    let mut values = vec![0.0; n * width];
    for i in 0..n {
        let device_seed = derive_seed(seed, ds.devices()[i].as_str(), &[]);
        for (col, t) in window.clone().enumerate() {
            let d = ds.value(i, attr, t);
            if !spec.enhanced {
                values[i * width + col] = d;
                continue;
            }
            let mut rng = stream(device_seed, "identify/mine", &[t as u64]);
            let mut agg = Vec::with_capacity(spec.samples);
            for _ in 0..spec.samples {
                let sample = draw_sample(
                    ds,
                    attr,
                    t,
                    i,
                    sample_size,
                    &order,
                    with_replacement,
                    &mut rng,
                );
                agg.push(feature.compute(d, &sample, reference, &kind));
            }
            values[i * width + col] = match spec.aggregation {
                Aggregation::Mean => mean(&agg),
                Aggregation::Median => median(&agg),
            };
        }
    }

    let matrix = BiasFeatureMatrix {
        feature: if spec.enhanced { spec.feature.clone() } else { "raw".into() },
        window_start: window.start,
        n_devices: n,
        width,
        values,
        labels: None,
    };
    if matrix.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite feature value"));
    }
    Ok(matrix)
}

/// Draw one sub-sample of reports at time t, always containing device i.
#[allow(clippy::too_many_arguments)]
fn draw_sample(
    ds: &TimeSeriesDataset,
    attr: usize,
    t: usize,
    device: usize,
    size: usize,
    name_order: &[usize],
    with_replacement: bool,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let n = name_order.len();
    let mut sample = Vec::with_capacity(size);
    sample.push(ds.value(device, attr, t));
    if with_replacement {
        for _ in 1..size {
            let pick = name_order[rng.gen_range(0..n)];
            sample.push(ds.value(pick, attr, t));
        }
    } else {
        // Partial Fisher-Yates over the name-ordered population minus i.
        let mut pool: Vec<usize> =
            name_order.iter().copied().filter(|&p| p != device).collect();
        let take = (size - 1).min(pool.len());
        for s in 0..take {
            let r = s + rng.gen_range(0..pool.len() - s);
            pool.swap(s, r);
            sample.push(ds.value(pool[s], attr, t));
        }
    }
    sample
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_ds(values: Vec<f64>) -> TimeSeriesDataset {
        let n = values.len() / 2;
        let mut buf = Vec::new();
        for i in 0..n {
            buf.push(values[i * 2]);
            buf.push(values[i * 2 + 1]);
        }
        let mut ds = TimeSeriesDataset::new(
            (0..n).map(|i| format!("dev-{i:02}")).collect(),
            vec!["a".into()],
            vec![AttributeKind::Continuous { lo: -10.0, hi: 10.0 }],
            vec![0, 1],
            buf,
        )
        .unwrap();
        ds.push_stage(crate::dataset::Provenance::Perturbed).unwrap();
        ds
    }

    #[test]
    fn full_sample_mean_bias_is_report_minus_population_mean() {
        let ds = small_ds(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let spec = BiasFeatureSpec { fraction: 1.0, samples: 1, ..Default::default() };
        let kind = ds.kind(0).clone();
        let reference =
            ReferenceStats::from_reports(&[1.0, 3.0, 5.0], &kind).unwrap();
        let m = mine_features(&ds, 0, 0..2, &spec, &reference, 3).unwrap();
        let pop_mean_t0 = (1.0 + 3.0 + 5.0) / 3.0;
        for i in 0..3 {
            assert_relative_eq!(
                m.value(i, 0),
                ds.value(i, 0, 0) - pop_mean_t0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn kl_of_identical_histograms_is_zero() {
        assert_relative_eq!(
            kl_divergence(&[0.3, 0.7], &[0.3, 0.7]),
            0.0,
            epsilon = 1e-12
        );
        assert!(kl_divergence(&[0.9, 0.1], &[0.1, 0.9]) > 0.1);
    }

    #[test]
    fn mining_is_deterministic_and_permutation_equivariant() {
        let ds = small_ds(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let spec = BiasFeatureSpec { fraction: 0.7, samples: 5, ..Default::default() };
        let kind = ds.kind(0).clone();
        let reference = ReferenceStats::from_reports(&[2.0, 4.0], &kind).unwrap();
        let a = mine_features(&ds, 0, 0..2, &spec, &reference, 9).unwrap();
        let b = mine_features(&ds, 0, 0..2, &spec, &reference, 9).unwrap();
        assert_eq!(a.values, b.values);

        // Permute device order (including names): rows permute identically.
        let mut ds_perm = TimeSeriesDataset::new(
            vec!["dev-02".into(), "dev-00".into(), "dev-01".into()],
            vec!["a".into()],
            vec![AttributeKind::Continuous { lo: -10.0, hi: 10.0 }],
            vec![0, 1],
            vec![5.0, 6.0, 1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        ds_perm.push_stage(crate::dataset::Provenance::Perturbed).unwrap();
        let p = mine_features(&ds_perm, 0, 0..2, &spec, &reference, 9).unwrap();
        for col in 0..2 {
            assert_relative_eq!(p.value(0, col), a.value(2, col), epsilon = 1e-12);
            assert_relative_eq!(p.value(1, col), a.value(0, col), epsilon = 1e-12);
            assert_relative_eq!(p.value(2, col), a.value(1, col), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_sized_subsample_is_an_error() {
        let ds = small_ds(vec![1.0, 2.0, 3.0, 4.0]);
        let spec = BiasFeatureSpec { fraction: 0.1, ..Default::default() };
        let kind = ds.kind(0).clone();
        let reference = ReferenceStats::from_reports(&[2.0], &kind).unwrap();
        assert!(mine_features(&ds, 0, 0..2, &spec, &reference, 3).is_err());
    }

    #[test]
    fn raw_mode_passes_reports_through() {
        let ds = small_ds(vec![1.0, 2.0, 3.0, 4.0]);
        let spec = BiasFeatureSpec { enhanced: false, ..Default::default() };
        let kind = ds.kind(0).clone();
        let reference = ReferenceStats::from_reports(&[2.0], &kind).unwrap();
        let m = mine_features(&ds, 0, 0..2, &spec, &reference, 3).unwrap();
        assert_eq!(m.value(0, 1), 2.0);
        assert_eq!(m.value(1, 0), 3.0);
        assert_eq!(m.feature, "raw");
    }
}
