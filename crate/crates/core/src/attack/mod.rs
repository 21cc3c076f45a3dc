//! Poisoning attack injection under stealth constraints.
//!
//! Three modes, each behind the [`Attack`] trait and selected by name at
//! runtime: input poisoning mutates raw readings before perturbation, rule
//! poisoning swaps the LDP mechanism itself, and output poisoning resamples
//! post-LDP reports. All three run the full clean pipeline for non-members,
//! so an empty poisoned set is bit-identical to the unattacked pipeline
//! under equal seeds.

mod dipa;
mod distortion;
mod drpa;
mod ropa;

pub use dipa::{apply_dipa, DipaAttack, DipaParams, DipaShift};
pub use distortion::{
    measure_distortion, verify_stealth, DecisionRule, DistortionReport, PairDisruption,
    StealthReport, ThresholdDetector,
};
pub use drpa::{apply_drpa, BudgetRule, DrpaAttack, DrpaParams};
pub use ropa::{apply_ropa, decay_weights, RopaAttack, RopaParams};

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::ldp::LdpConfig;
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    Dipa,
    Drpa,
    Ropa,
}

impl std::fmt::Display for AttackMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttackMode::Dipa => write!(f, "dipa"),
            AttackMode::Drpa => write!(f, "drpa"),
            AttackMode::Ropa => write!(f, "ropa"),
        }
    }
}

/// Mode-specific knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ModeParams {
    Dipa(DipaParams),
    Drpa(DrpaParams),
    Ropa(RopaParams),
}

/// Which devices are poisoned, where, and under what stealth caps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    pub target_attribute: usize,
    /// Poisoned device set M.
    pub poisoned: Vec<usize>,
    /// Magnitude cap: sup over devices of |pattern at time t| stays <= this.
    #[serde(default)]
    pub magnitude_cap: Option<f64>,
    /// Variation cap: sup over devices of |pattern change per step| stays <= this.
    #[serde(default)]
    pub variation_cap: Option<f64>,
    pub params: ModeParams,
}

impl AttackConfig {
    pub fn mode(&self) -> AttackMode {
        match self.params {
            ModeParams::Dipa(_) => AttackMode::Dipa,
            ModeParams::Drpa(_) => AttackMode::Drpa,
            ModeParams::Ropa(_) => AttackMode::Ropa,
        }
    }

    pub fn validate(&self, n_devices: usize, n_attributes: usize) -> Result<()> {
        if self.target_attribute >= n_attributes {
            return Err(Error::config(format!(
                "target attribute {} out of range 0..{n_attributes}",
                self.target_attribute
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &d in &self.poisoned {
            if d >= n_devices {
                return Err(Error::config(format!(
                    "poisoned device {d} out of range 0..{n_devices}"
                )));
            }
            if !seen.insert(d) {
                return Err(Error::config(format!("device {d} listed twice in M")));
            }
        }
        for cap in [self.magnitude_cap, self.variation_cap].into_iter().flatten() {
            if !(cap >= 0.0) {
                return Err(Error::config("stealth caps must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn is_member(&self, device: usize) -> bool {
        self.poisoned.contains(&device)
    }
}

/// Applied attack pattern and ground-truth labels for one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackTrace {
    pub target_attribute: usize,
    /// 1 exactly for devices in M.
    pub labels: Vec<bool>,
    /// Pattern value per (device, time) at the target attribute:
    /// poisoned minus clean output of the attacked stage.
    pub pattern: Vec<f64>,
    pub n_times: usize,
    /// Realized sup-norm of the pattern vector per time instance.
    pub magnitude_sup: Vec<f64>,
    /// Realized sup-norm of the pattern step per time instance (first entry 0).
    pub variation_sup: Vec<f64>,
}

impl AttackTrace {
    pub(crate) fn from_pattern(
        target_attribute: usize,
        labels: Vec<bool>,
        pattern: Vec<f64>,
        n_times: usize,
    ) -> Self {
        let n = labels.len();
        assert_eq!(pattern.len(), n * n_times);
        let mut magnitude_sup = vec![0.0f64; n_times];
        let mut variation_sup = vec![0.0f64; n_times];
        for t in 0..n_times {
            for i in 0..n {
                let p = pattern[i * n_times + t];
                magnitude_sup[t] = magnitude_sup[t].max(p.abs());
                if t > 0 {
                    let step = (p - pattern[i * n_times + t - 1]).abs();
                    variation_sup[t] = variation_sup[t].max(step);
                }
            }
        }
        AttackTrace { target_attribute, labels, pattern, n_times, magnitude_sup, variation_sup }
    }

    pub fn pattern_at(&self, device: usize, time: usize) -> f64 {
        self.pattern[device * self.n_times + time]
    }
}

/// A poisoning strategy over the full collection pipeline.
pub trait Attack: Send + Sync {
    fn name(&self) -> &'static str;

    /// Run raw data through the (attacked) pipeline. `active` is the
    /// half-open time-index range the attack is live in; everywhere else and
    /// for non-members the output is bit-identical to `ldp::perturb_dataset`
    /// with the same seed.
    fn run(
        &self,
        raw: &TimeSeriesDataset,
        cfgs: &[LdpConfig],
        seed: u64,
        active: Range<usize>,
    ) -> Result<(TimeSeriesDataset, AttackTrace)>;
}

pub fn attack_names() -> &'static [&'static str] {
    &["dipa", "drpa", "ropa"]
}

/// Build an attack strategy by registry name. The config's mode parameters
/// must belong to the named mode.
pub fn create_attack(name: &str, cfg: &AttackConfig) -> Result<Box<dyn Attack>> {
    match (name, &cfg.params) {
        ("dipa", ModeParams::Dipa(_)) => Ok(Box::new(DipaAttack::new(cfg.clone()))),
        ("drpa", ModeParams::Drpa(_)) => Ok(Box::new(DrpaAttack::new(cfg.clone()))),
        ("ropa", ModeParams::Ropa(_)) => Ok(Box::new(RopaAttack::new(cfg.clone()))),
        ("dipa" | "drpa" | "ropa", _) => Err(Error::config(format!(
            "attack {name:?} given parameters for mode {}",
            cfg.mode()
        ))),
        (other, _) => Err(Error::config(format!(
            "unknown attack {other:?}; known: {:?}",
            attack_names()
        ))),
    }
}

/// Build the attack selected by the config itself.
pub fn attack_for(cfg: &AttackConfig) -> Result<Box<dyn Attack>> {
    match cfg.params {
        ModeParams::Dipa(_) => create_attack("dipa", cfg),
        ModeParams::Drpa(_) => create_attack("drpa", cfg),
        ModeParams::Ropa(_) => create_attack("ropa", cfg),
    }
}

/// Draw a poisoned device set of round(ratio * n) distinct devices.
pub fn sample_poisoned_set(n_devices: usize, ratio: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..=0.5).contains(&ratio) {
        return Err(Error::config("attack ratio must lie in [0, 0.5]"));
    }
    let m = (ratio * n_devices as f64).round() as usize;
    let mut rng = stream(seed, "attack/members", &[]);
    let mut pool: Vec<usize> = (0..n_devices).collect();
    // partial Fisher-Yates
    use rand::Rng;
    for i in 0..m {
        let j = i + rng.gen_range(0..pool.len() - i);
        pool.swap(i, j);
    }
    let mut set: Vec<usize> = pool[..m].to_vec();
    set.sort_unstable();
    Ok(set)
}

/// Clamp a desired pattern value under the magnitude/variation caps.
/// Range precedence is handled by callers that have a physical range.
pub(crate) fn cap_pattern(desired: f64, previous: f64, cfg: &AttackConfig) -> f64 {
    let mut p = desired;
    if let Some(g) = cfg.magnitude_cap {
        p = p.clamp(-g, g);
    }
    if let Some(e) = cfg.variation_cap {
        p = p.clamp(previous - e, previous + e);
    }
    p
}
