//! In-memory representation of multi-attribute device time series.
//!
//! A dataset holds `n` devices x `k` attributes x `T` time instances.
//! Continuous readings are stored as-is; discrete readings are stored as
//! category indices widened to f64. Raw and input-poisoned data must lie in
//! each attribute's domain; perturbed data is deliberately unbounded (the
//! mean estimator relies on unclamped noise).

mod csv_io;
mod generate;

pub use csv_io::{export_csv, ingest_csv, IngestColumn, IngestSchema};
pub use generate::{generate_synthetic, AttributeSpec, CorrelationSpec, GeneratorSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value domain of one attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AttributeKind {
    /// Closed real interval `[lo, hi]`.
    Continuous { lo: f64, hi: f64 },
    /// Ordered finite label set.
    Discrete { categories: Vec<String> },
}

impl AttributeKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            AttributeKind::Continuous { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                    return Err(Error::config(format!(
                        "continuous domain must be a finite interval with lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
            AttributeKind::Discrete { categories } => {
                if categories.len() < 2 {
                    return Err(Error::config("discrete domain needs at least 2 categories"));
                }
                let mut seen = std::collections::BTreeSet::new();
                for c in categories {
                    if !seen.insert(c) {
                        return Err(Error::config(format!("duplicate category label {c:?}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, AttributeKind::Continuous { .. })
    }

    /// Domain size: `hi - lo` for continuous, category count for discrete.
    pub fn domain_size(&self) -> f64 {
        match self {
            AttributeKind::Continuous { lo, hi } => hi - lo,
            AttributeKind::Discrete { categories } => categories.len() as f64,
        }
    }

    pub fn cardinality(&self) -> usize {
        match self {
            AttributeKind::Continuous { .. } => 0,
            AttributeKind::Discrete { categories } => categories.len(),
        }
    }

    /// Whether a stored value is valid raw data for this kind.
    pub fn contains(&self, v: f64) -> bool {
        match self {
            AttributeKind::Continuous { lo, hi } => v.is_finite() && *lo <= v && v <= *hi,
            AttributeKind::Discrete { categories } => {
                v.fract() == 0.0 && v >= 0.0 && (v as usize) < categories.len()
            }
        }
    }
}

/// Pipeline stage a dataset's values belong to.
///
/// The stage history is appended, never rewound: every dataset starts Raw;
/// poisoning may happen before perturbation (input/rule attacks) or after it
/// (output attacks), so both orders of Poisoned and Perturbed are legal, but
/// nothing ever becomes Raw again.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Raw,
    Poisoned,
    Perturbed,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Raw => write!(f, "raw"),
            Provenance::Poisoned => write!(f, "poisoned"),
            Provenance::Perturbed => write!(f, "perturbed"),
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Provenance::Raw),
            "poisoned" => Ok(Provenance::Poisoned),
            "perturbed" => Ok(Provenance::Perturbed),
            other => Err(Error::config(format!("unknown provenance {other:?}"))),
        }
    }
}

/// n devices x k attributes x T time instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesDataset {
    devices: Vec<String>,
    attributes: Vec<String>,
    kinds: Vec<AttributeKind>,
    times: Vec<i64>,
    /// Row-major `[device][attribute][time]`.
    values: Vec<f64>,
    /// Stage history, oldest first; starts with Raw.
    stages: Vec<Provenance>,
}

impl TimeSeriesDataset {
    pub fn new(
        devices: Vec<String>,
        attributes: Vec<String>,
        kinds: Vec<AttributeKind>,
        times: Vec<i64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        Self::from_parts(devices, attributes, kinds, times, values, vec![Provenance::Raw])
    }

    /// Construct with an explicit stage history. Domain containment is only
    /// enforced while the data has not been perturbed.
    pub fn from_parts(
        devices: Vec<String>,
        attributes: Vec<String>,
        kinds: Vec<AttributeKind>,
        times: Vec<i64>,
        values: Vec<f64>,
        stages: Vec<Provenance>,
    ) -> Result<Self> {
        if devices.is_empty() || attributes.is_empty() || times.is_empty() {
            return Err(Error::config("dataset needs n >= 1, k >= 1, T >= 1"));
        }
        if attributes.len() != kinds.len() {
            return Err(Error::config("one kind per attribute required"));
        }
        for k in &kinds {
            k.validate()?;
        }
        if values.len() != devices.len() * attributes.len() * times.len() {
            return Err(Error::config(format!(
                "value buffer has {} entries, expected {}",
                values.len(),
                devices.len() * attributes.len() * times.len()
            )));
        }
        if stages.first() != Some(&Provenance::Raw) {
            return Err(Error::constraint("stage history must start raw"));
        }
        if stages[1..].iter().any(|s| *s == Provenance::Raw) {
            return Err(Error::constraint("provenance cannot return to raw"));
        }
        let ds = TimeSeriesDataset {
            devices,
            attributes,
            kinds,
            times,
            values,
            stages,
        };
        ds.validate_domains()?;
        Ok(ds)
    }

    pub fn n_devices(&self) -> usize {
        self.devices.len()
    }

    pub fn n_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn devices(&self) -> &[String] {
        &self.devices
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn kinds(&self) -> &[AttributeKind] {
        &self.kinds
    }

    pub fn kind(&self, attr: usize) -> &AttributeKind {
        &self.kinds[attr]
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a == name)
    }

    #[inline]
    fn idx(&self, device: usize, attr: usize, time: usize) -> usize {
        (device * self.attributes.len() + attr) * self.times.len() + time
    }

    #[inline]
    pub fn value(&self, device: usize, attr: usize, time: usize) -> f64 {
        self.values[self.idx(device, attr, time)]
    }

    #[inline]
    pub fn set_value(&mut self, device: usize, attr: usize, time: usize, v: f64) {
        let i = self.idx(device, attr, time);
        self.values[i] = v;
    }

    /// All device readings of one attribute at one time instance.
    pub fn column(&self, attr: usize, time: usize) -> Vec<f64> {
        (0..self.devices.len()).map(|i| self.value(i, attr, time)).collect()
    }

    /// One device's series for one attribute.
    pub fn series(&self, device: usize, attr: usize) -> Vec<f64> {
        (0..self.times.len()).map(|t| self.value(device, attr, t)).collect()
    }

    /// Current (latest) stage.
    pub fn provenance(&self) -> Provenance {
        *self.stages.last().unwrap()
    }

    pub fn stage_history(&self) -> &[Provenance] {
        &self.stages
    }

    /// Append a stage. Raw is only ever the initial stage.
    pub fn push_stage(&mut self, stage: Provenance) -> Result<()> {
        if stage == Provenance::Raw {
            return Err(Error::constraint("provenance cannot return to raw"));
        }
        self.stages.push(stage);
        Ok(())
    }

    /// Check domain containment of every value. Only meaningful for data that
    /// has not been perturbed yet.
    pub fn validate_domains(&self) -> Result<()> {
        if self.stages.contains(&Provenance::Perturbed) {
            return Ok(());
        }
        for j in 0..self.attributes.len() {
            let kind = &self.kinds[j];
            for i in 0..self.devices.len() {
                for t in 0..self.times.len() {
                    let v = self.value(i, j, t);
                    if !kind.contains(v) {
                        return Err(Error::constraint(format!(
                            "value {v} of device {i}, attribute {}, time index {t} \
                             is outside its domain",
                            self.attributes[j]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Restrict to a half-open time-index range, keeping the stage history.
    pub fn slice_times(&self, range: std::ops::Range<usize>) -> TimeSeriesDataset {
        assert!(range.end <= self.times.len());
        let times: Vec<i64> = self.times[range.clone()].to_vec();
        let mut values = Vec::with_capacity(self.devices.len() * self.attributes.len() * times.len());
        for i in 0..self.devices.len() {
            for j in 0..self.attributes.len() {
                for t in range.clone() {
                    values.push(self.value(i, j, t));
                }
            }
        }
        TimeSeriesDataset {
            devices: self.devices.clone(),
            attributes: self.attributes.clone(),
            kinds: self.kinds.clone(),
            times,
            values,
            stages: self.stages.clone(),
        }
    }
}

/// Ordered collection of clean datasets used to build detector baselines.
#[derive(Debug, Clone, Default)]
pub struct HistoryStore {
    datasets: Vec<TimeSeriesDataset>,
}

impl HistoryStore {
    pub fn new() -> Self {
        HistoryStore { datasets: Vec::new() }
    }

    /// Push a clean dataset. Anything that went through a poisoning stage is
    /// rejected; history must stay attack-free.
    pub fn push(&mut self, ds: TimeSeriesDataset) -> Result<()> {
        if ds.stage_history().contains(&Provenance::Poisoned) {
            return Err(Error::constraint("history store only accepts unpoisoned data"));
        }
        self.datasets.push(ds);
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }

    pub fn len(&self) -> usize {
        self.datasets.len()
    }

    pub fn datasets(&self) -> &[TimeSeriesDataset] {
        &self.datasets
    }
}
