//! Input poisoning: falsify raw readings before LDP perturbation.
//!
//! Poisoned values must stay inside the sensor/environment range, which is
//! what keeps the attack stealthy against range checks. With clamping
//! disabled a shift that would exit the range is a hard error.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{cap_pattern, Attack, AttackConfig, AttackTrace, ModeParams};
use crate::dataset::{AttributeKind, Provenance, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::ldp::{perturb_dataset, LdpConfig};

/// How a raw reading is falsified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DipaShift {
    /// Add a fixed offset (continuous attributes).
    Additive { magnitude: f64 },
    /// Shift the category index, wrapping around the label set.
    Category { offset: i64 },
    /// Drive readings to the upper end of the admissible range (top category
    /// for discrete attributes). A per-reading "farthest endpoint" rule would
    /// cancel in aggregate; a fixed endpoint maximizes statistic distortion.
    MaxDeviation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DipaParams {
    pub shift: DipaShift,
    /// Clamp shifted values into the valid range instead of erroring.
    #[serde(default = "default_true")]
    pub clamp: bool,
    /// Environment range intersected with the sensor (domain) range.
    #[serde(default)]
    pub env_range: Option<(f64, f64)>,
}

fn default_true() -> bool {
    true
}

impl Default for DipaParams {
    fn default() -> Self {
        DipaParams { shift: DipaShift::MaxDeviation, clamp: true, env_range: None }
    }
}

/// Poison raw readings of devices in M at the target attribute. Returns the
/// falsified raw dataset (provenance Poisoned when M is non-empty) plus the
/// raw-stage pattern trace. No perturbation happens here.
pub fn apply_dipa(
    raw: &TimeSeriesDataset,
    cfg: &AttackConfig,
) -> Result<(TimeSeriesDataset, AttackTrace)> {
    apply_dipa_in(raw, cfg, 0..raw.n_times())
}

pub fn apply_dipa_in(
    raw: &TimeSeriesDataset,
    cfg: &AttackConfig,
    active: Range<usize>,
) -> Result<(TimeSeriesDataset, AttackTrace)> {
    cfg.validate(raw.n_devices(), raw.n_attributes())?;
    let params = match &cfg.params {
        ModeParams::Dipa(p) => p,
        _ => return Err(Error::config("attack config is not input-poisoning")),
    };
    let j = cfg.target_attribute;
    let kind = raw.kind(j).clone();
    let n_times = raw.n_times();

    let mut out = raw.clone();
    let mut pattern = vec![0.0; raw.n_devices() * n_times];
    let labels: Vec<bool> = (0..raw.n_devices()).map(|i| cfg.is_member(i)).collect();

    if !cfg.poisoned.is_empty() {
        for &device in &cfg.poisoned {
            let mut prev = 0.0;
            for t in active.clone() {
                let clean = raw.value(device, j, t);
                let poisoned = match &kind {
                    AttributeKind::Continuous { lo, hi } => {
                        let (mut rlo, mut rhi) = (*lo, *hi);
                        if let Some((elo, ehi)) = params.env_range {
                            rlo = rlo.max(elo);
                            rhi = rhi.min(ehi);
                        }
                        if rlo > rhi {
                            return Err(Error::config("empty sensor/environment range"));
                        }
                        let target = match params.shift {
                            DipaShift::Additive { magnitude } => clean + magnitude,
                            DipaShift::MaxDeviation => rhi,
                            DipaShift::Category { .. } => {
                                return Err(Error::config(
                                    "category shift on a continuous attribute",
                                ))
                            }
                        };
                        let wanted = target - clean;
                        let capped = cap_pattern(wanted, prev, cfg);
                        // Uncapped shifts land exactly on the target value.
                        let mut value = if capped == wanted { target } else { clean + capped };
                        if value < rlo || value > rhi {
                            if !params.clamp {
                                return Err(Error::constraint(format!(
                                    "poisoned value {value} exits the valid range \
                                     [{rlo}, {rhi}] and clamping is disabled"
                                )));
                            }
                            value = value.clamp(rlo, rhi);
                        }
                        prev = value - clean;
                        value
                    }
                    AttributeKind::Discrete { categories } => {
                        let cats = categories.len() as i64;
                        let idx = clean as i64;
                        let target = match params.shift {
                            DipaShift::Category { offset } => (idx + offset).rem_euclid(cats),
                            DipaShift::MaxDeviation => cats - 1,
                            DipaShift::Additive { .. } => {
                                return Err(Error::config(
                                    "additive shift on a discrete attribute",
                                ))
                            }
                        };
                        let capped = cap_pattern((target - idx) as f64, prev, cfg);
                        let value = (idx + capped.round() as i64).clamp(0, cats - 1);
                        prev = (value - idx) as f64;
                        value as f64
                    }
                };
                pattern[device * n_times + t] = poisoned - clean;
                out.set_value(device, j, t, poisoned);
            }
        }
        out.push_stage(Provenance::Poisoned)?;
        out.validate_domains()?;
    }

    let trace = AttackTrace::from_pattern(j, labels, pattern, n_times);
    Ok((out, trace))
}

/// Input poisoning followed by the standard perturbation pipeline.
#[derive(Debug, Clone)]
pub struct DipaAttack {
    cfg: AttackConfig,
}

impl DipaAttack {
    pub fn new(cfg: AttackConfig) -> Self {
        DipaAttack { cfg }
    }
}

impl Attack for DipaAttack {
    fn name(&self) -> &'static str {
        "dipa"
    }

    fn run(
        &self,
        raw: &TimeSeriesDataset,
        cfgs: &[LdpConfig],
        seed: u64,
        active: Range<usize>,
    ) -> Result<(TimeSeriesDataset, AttackTrace)> {
        let (poisoned, trace) = apply_dipa_in(raw, &self.cfg, active)?;
        Ok((perturb_dataset(&poisoned, cfgs, seed)?, trace))
    }
}
