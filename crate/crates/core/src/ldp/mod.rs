//! LDP perturbation mechanisms, debiased estimators, and closed-form
//! fault-tolerance bounds.
//!
//! Two mechanisms are registered: Laplace noise for continuous attributes
//! (mean estimation) and generalized randomized response for discrete ones
//! (frequency estimation). Both expose an (alpha, delta) fault-tolerance
//! bound stating that the perturbed statistic deviates from the clean one by
//! more than alpha with probability at most 1 - delta.

mod grr;
mod laplace;

pub use grr::GrrMechanism;
pub use laplace::LaplaceMechanism;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::dataset::{AttributeKind, Provenance, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    Laplace,
    Grr,
}

impl std::fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MechanismKind::Laplace => write!(f, "laplace"),
            MechanismKind::Grr => write!(f, "grr"),
        }
    }
}

/// Mechanism choice, privacy budget, confidence, and the target domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdpConfig {
    pub mechanism: MechanismKind,
    pub epsilon: f64,
    pub delta: f64,
    pub domain: AttributeKind,
}

impl LdpConfig {
    pub fn new(mechanism: MechanismKind, epsilon: f64, delta: f64, domain: AttributeKind) -> Self {
        LdpConfig { mechanism, epsilon, delta, domain }
    }

    /// Convenience: pick the mechanism matching the domain kind.
    pub fn for_domain(domain: AttributeKind, epsilon: f64, delta: f64) -> Self {
        let mechanism = if domain.is_continuous() {
            MechanismKind::Laplace
        } else {
            MechanismKind::Grr
        };
        LdpConfig { mechanism, epsilon, delta, domain }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::config("epsilon must be positive and finite"));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::config("delta must lie in [0, 1)"));
        }
        self.domain.validate()?;
        match (self.mechanism, self.domain.is_continuous()) {
            (MechanismKind::Laplace, true) | (MechanismKind::Grr, false) => Ok(()),
            (MechanismKind::Laplace, false) => {
                Err(Error::config("laplace mechanism requires a continuous domain"))
            }
            (MechanismKind::Grr, true) => {
                Err(Error::config("grr mechanism requires a discrete domain"))
            }
        }
    }
}

/// Statistical query result: per-time mean or frequency histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum SqrValue {
    Mean(f64),
    Frequency(Vec<f64>),
}

impl SqrValue {
    pub fn l1_distance(&self, other: &SqrValue) -> f64 {
        match (self, other) {
            (SqrValue::Mean(a), SqrValue::Mean(b)) => (a - b).abs(),
            (SqrValue::Frequency(a), SqrValue::Frequency(b)) => {
                assert_eq!(a.len(), b.len(), "histogram widths differ");
                a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
            }
            _ => panic!("cannot compare mean and frequency query results"),
        }
    }

    /// Scalar view used by correlation estimators: the mean itself, or a
    /// frequency vector component.
    pub fn as_mean(&self) -> Option<f64> {
        match self {
            SqrValue::Mean(v) => Some(*v),
            SqrValue::Frequency(_) => None,
        }
    }

    pub fn as_frequency(&self) -> Option<&[f64]> {
        match self {
            SqrValue::Mean(_) => None,
            SqrValue::Frequency(h) => Some(h),
        }
    }
}

/// Closed-form (alpha, delta) fault tolerance of a mechanism at sample size n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceBound {
    pub alpha: f64,
    pub delta: f64,
    pub mechanism: MechanismKind,
}

/// A perturbation mechanism together with its estimator and tolerance bound.
///
/// Values move through the trait as f64; discrete mechanisms interpret them
/// as category indices. All draws come from the caller's RNG handle, so
/// callers may parallelize with independently derived streams.
pub trait Mechanism: Send + Sync {
    fn name(&self) -> &'static str;
    fn kind(&self) -> MechanismKind;
    fn epsilon(&self) -> f64;

    /// Perturb a single raw value.
    fn perturb(&self, value: f64, rng: &mut dyn RngCore) -> f64;

    /// Aggregate perturbed reports into a debiased statistic.
    fn estimate(&self, reports: &[f64]) -> Result<SqrValue>;

    /// Plain statistic of unperturbed raw values (mean or raw frequencies).
    fn raw_statistic(&self, values: &[f64]) -> Result<SqrValue>;

    /// Fault-tolerance bound at sample size n and confidence delta.
    fn tolerance(&self, n: usize, delta: f64) -> Result<ToleranceBound>;
}

pub fn mechanism_names() -> &'static [&'static str] {
    &["laplace", "grr"]
}

/// Build a mechanism by registry name.
pub fn create_mechanism(name: &str, cfg: &LdpConfig) -> Result<Box<dyn Mechanism>> {
    match name {
        "laplace" => Ok(Box::new(LaplaceMechanism::from_config(cfg)?)),
        "grr" => Ok(Box::new(GrrMechanism::from_config(cfg)?)),
        other => Err(Error::config(format!(
            "unknown mechanism {other:?}; known: {:?}",
            mechanism_names()
        ))),
    }
}

/// Build the mechanism selected by the config.
pub fn mechanism_for(cfg: &LdpConfig) -> Result<Box<dyn Mechanism>> {
    match cfg.mechanism {
        MechanismKind::Laplace => create_mechanism("laplace", cfg),
        MechanismKind::Grr => create_mechanism("grr", cfg),
    }
}

// ---------------------------------------------------------------------------
// Free-standing operations
// ---------------------------------------------------------------------------

pub fn laplace_perturb(value: f64, cfg: &LdpConfig, rng: &mut dyn RngCore) -> Result<f64> {
    Ok(LaplaceMechanism::from_config(cfg)?.perturb(value, rng))
}

pub fn grr_perturb(category: usize, cfg: &LdpConfig, rng: &mut dyn RngCore) -> Result<usize> {
    let mech = GrrMechanism::from_config(cfg)?;
    if category >= mech.cardinality() {
        return Err(Error::invalid(format!(
            "category {category} out of range 0..{}",
            mech.cardinality()
        )));
    }
    Ok(mech.perturb(category as f64, rng) as usize)
}

/// Arithmetic mean of perturbed reports; unbiased for the true mean.
pub fn estimate_mean(reports: &[f64], _cfg: &LdpConfig) -> Result<SqrValue> {
    if reports.is_empty() {
        return Err(Error::invalid("cannot estimate a mean from no reports"));
    }
    Ok(SqrValue::Mean(reports.iter().sum::<f64>() / reports.len() as f64))
}

/// Debiased frequency estimate projected onto the probability simplex.
pub fn estimate_frequency(reports: &[usize], cfg: &LdpConfig) -> Result<SqrValue> {
    let mech = GrrMechanism::from_config(cfg)?;
    let as_f64: Vec<f64> = reports.iter().map(|&c| c as f64).collect();
    mech.estimate(&as_f64)
}

pub fn tolerance_laplace(n: usize, cfg: &LdpConfig) -> Result<ToleranceBound> {
    LaplaceMechanism::from_config(cfg)?.tolerance(n, cfg.delta)
}

pub fn tolerance_grr(n: usize, cfg: &LdpConfig) -> Result<ToleranceBound> {
    GrrMechanism::from_config(cfg)?.tolerance(n, cfg.delta)
}

// ---------------------------------------------------------------------------
// Dataset-level helpers
// ---------------------------------------------------------------------------

/// Tag used by the dataset perturbation streams; attacks that must stay
/// bit-identical to the clean pipeline on non-members reuse it.
pub const PERTURB_STREAM: &str = "ldp/perturb";

/// Perturb every reading with its attribute's mechanism. Each (device,
/// attribute, time) cell draws from its own derived stream, so any subset of
/// cells can be re-perturbed independently with identical results.
pub fn perturb_dataset(
    ds: &TimeSeriesDataset,
    cfgs: &[LdpConfig],
    seed: u64,
) -> Result<TimeSeriesDataset> {
    let mechs = dataset_mechanisms(ds, cfgs)?;
    let mut out = ds.clone();
    out.push_stage(Provenance::Perturbed)?;
    for i in 0..ds.n_devices() {
        for (j, mech) in mechs.iter().enumerate() {
            for t in 0..ds.n_times() {
                let mut rng = stream(seed, PERTURB_STREAM, &[i as u64, j as u64, t as u64]);
                let v = mech.perturb(ds.value(i, j, t), &mut rng);
                out.set_value(i, j, t, v);
            }
        }
    }
    Ok(out)
}

/// Instantiate one mechanism per attribute, checking kind compatibility.
pub fn dataset_mechanisms(
    ds: &TimeSeriesDataset,
    cfgs: &[LdpConfig],
) -> Result<Vec<Box<dyn Mechanism>>> {
    if cfgs.len() != ds.n_attributes() {
        return Err(Error::config(format!(
            "{} ldp configs for {} attributes",
            cfgs.len(),
            ds.n_attributes()
        )));
    }
    cfgs.iter()
        .zip(ds.kinds())
        .enumerate()
        .map(|(j, (cfg, kind))| {
            if cfg.domain != *kind {
                return Err(Error::config(format!(
                    "ldp config for attribute {j} does not match the dataset domain"
                )));
            }
            mechanism_for(cfg)
        })
        .collect()
}

/// Per-time-instance statistic series for one attribute. Perturbed datasets
/// get the debiased estimator; raw ones the plain statistic.
pub fn sqr_series(ds: &TimeSeriesDataset, attr: usize, cfg: &LdpConfig) -> Result<Vec<SqrValue>> {
    windowed_sqr_series(ds, attr, cfg, 1)
}

/// Trailing-window statistic series: entry `w-1+s` aggregates all reports in
/// time window `[s, s+w)`. Length is `T - w + 1`.
pub fn windowed_sqr_series(
    ds: &TimeSeriesDataset,
    attr: usize,
    cfg: &LdpConfig,
    window: usize,
) -> Result<Vec<SqrValue>> {
    if window == 0 || window > ds.n_times() {
        return Err(Error::invalid(format!(
            "window {window} invalid for series of length {}",
            ds.n_times()
        )));
    }
    let mech = mechanism_for(cfg)?;
    let perturbed = ds.stage_history().contains(&Provenance::Perturbed);
    let mut out = Vec::with_capacity(ds.n_times() - window + 1);
    let mut buf = Vec::with_capacity(ds.n_devices() * window);
    for start in 0..=(ds.n_times() - window) {
        buf.clear();
        for i in 0..ds.n_devices() {
            for t in start..start + window {
                buf.push(ds.value(i, attr, t));
            }
        }
        let v = if perturbed { mech.estimate(&buf)? } else { mech.raw_statistic(&buf)? };
        out.push(v);
    }
    Ok(out)
}
