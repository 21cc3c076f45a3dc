//! Empirical distortion measurement and stealth verification.

use serde::{Deserialize, Serialize};

use super::AttackConfig;
use crate::error::{Error, Result};
use crate::ldp::{LdpConfig, SqrValue};
use crate::stats::{pearson, std_dev};

/// Correlation disruption of one attribute pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairDisruption {
    pub a: usize,
    pub b: usize,
    /// |corr(poisoned) - corr(clean)| of the two statistic series.
    pub delta_rho: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistortionReport {
    /// L1 distance between clean and poisoned statistics of the target
    /// attribute, per time instance.
    pub per_instance_l1: Vec<f64>,
    /// Empirical correlation disruption per continuous attribute pair
    /// involving the target.
    pub delta_rho: Vec<PairDisruption>,
    /// Std of the clean target statistic series (None for frequency targets
    /// or zero-variance series, where the bound is not applicable).
    pub sigma_x: Option<f64>,
    /// Closed-form disruption bound (m/n) * (e^eps - 1) / sigma_x.
    pub bound: Option<f64>,
}

/// Compare clean and poisoned per-attribute statistic series.
/// `clean[j][t]` and `poisoned[j][t]` must have identical shapes.
pub fn measure_distortion(
    clean: &[Vec<SqrValue>],
    poisoned: &[Vec<SqrValue>],
    cfg: &AttackConfig,
    n_devices: usize,
    ldp: &LdpConfig,
) -> Result<DistortionReport> {
    if clean.len() != poisoned.len() || clean.is_empty() {
        return Err(Error::invalid("clean and poisoned series must have equal shapes"));
    }
    let k = clean.len();
    let j = cfg.target_attribute;
    if j >= k {
        return Err(Error::invalid("target attribute out of range"));
    }
    for a in 0..k {
        if clean[a].len() != poisoned[a].len() || clean[a].len() != clean[0].len() {
            return Err(Error::invalid("clean and poisoned series must have equal shapes"));
        }
    }

    let per_instance_l1: Vec<f64> = clean[j]
        .iter()
        .zip(&poisoned[j])
        .map(|(c, p)| c.l1_distance(p))
        .collect();

    let mean_series = |series: &[SqrValue]| -> Option<Vec<f64>> {
        series.iter().map(|s| s.as_mean()).collect()
    };

    let mut delta_rho = Vec::new();
    if let Some(target_clean) = mean_series(&clean[j]) {
        let target_poisoned = mean_series(&poisoned[j]).expect("shape checked above");
        for other in 0..k {
            if other == j {
                continue;
            }
            let (Some(c_other), Some(_)) = (mean_series(&clean[other]), mean_series(&poisoned[other]))
            else {
                continue;
            };
            // corr(poisoned target, clean partner) vs corr(clean, clean)
            let (Some(rho_u), Some(rho_c)) =
                (pearson(&target_clean, &c_other), pearson(&target_poisoned, &c_other))
            else {
                continue;
            };
            let (a, b) = if j < other { (j, other) } else { (other, j) };
            delta_rho.push(PairDisruption { a, b, delta_rho: (rho_c - rho_u).abs() });
        }
    }

    let ratio = cfg.poisoned.len() as f64 / n_devices as f64;
    let (sigma_x, bound) = match mean_series(&clean[j]) {
        Some(series) => {
            let s = std_dev(&series);
            if s > 0.0 {
                (Some(s), Some(ratio * (ldp.epsilon.exp() - 1.0) / s))
            } else {
                (None, None)
            }
        }
        None => (None, None),
    };

    Ok(DistortionReport { per_instance_l1, delta_rho, sigma_x, bound })
}

/// A fixed measurable decision rule fed to stealth verification.
pub trait DecisionRule {
    fn decide(&self, value: f64) -> bool;
}

/// Flags a report when |value| exceeds the threshold.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdDetector {
    pub threshold: f64,
}

impl DecisionRule for ThresholdDetector {
    fn decide(&self, value: f64) -> bool {
        value.abs() > self.threshold
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StealthReport {
    pub clean_rate: f64,
    pub poisoned_rate: f64,
    /// |P(detect clean) - P(detect poisoned)| empirically.
    pub gap: f64,
    /// e^(eps + eps') - 1.
    pub bound: f64,
    /// Three binomial standard errors of the gap estimate.
    pub slack: f64,
    pub within_bound: bool,
}

/// Empirically check the indistinguishability bound: the detection-rate gap
/// between clean and poisoned outputs must not exceed e^(eps + eps') - 1
/// beyond Monte-Carlo slack.
pub fn verify_stealth(
    clean_outputs: &[f64],
    poisoned_outputs: &[f64],
    rule: &dyn DecisionRule,
    epsilon: f64,
    epsilon_prime: f64,
) -> Result<StealthReport> {
    if clean_outputs.is_empty() || poisoned_outputs.is_empty() {
        return Err(Error::invalid("stealth verification needs non-empty samples"));
    }
    let rate = |xs: &[f64]| xs.iter().filter(|&&x| rule.decide(x)).count() as f64 / xs.len() as f64;
    let clean_rate = rate(clean_outputs);
    let poisoned_rate = rate(poisoned_outputs);
    let gap = (clean_rate - poisoned_rate).abs();
    let bound = (epsilon + epsilon_prime).exp() - 1.0;
    let var = clean_rate * (1.0 - clean_rate) / clean_outputs.len() as f64
        + poisoned_rate * (1.0 - poisoned_rate) / poisoned_outputs.len() as f64;
    let slack = 3.0 * var.sqrt();
    Ok(StealthReport {
        clean_rate,
        poisoned_rate,
        gap,
        bound,
        slack,
        within_bound: gap <= bound + slack,
    })
}
