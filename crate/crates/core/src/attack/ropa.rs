//! Output poisoning: resample post-LDP reports from an exponential-decay
//! distribution over the legitimate output space.
//!
//! Poisoned outputs mimic LDP noise: candidate x is drawn with probability
//! proportional to exp(-eps * |x - center| / sensitivity), where the center
//! is the legitimate output optionally reflected and drifted by the
//! attacker. Candidates form a fixed grid over the attribute domain for
//! continuous attributes and the category set for discrete ones.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{cap_pattern, Attack, AttackConfig, AttackTrace, ModeParams};
use crate::dataset::{AttributeKind, Provenance, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::ldp::{perturb_dataset, LdpConfig};
use crate::rng::stream;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RopaParams {
    /// Sensitivity of the query function (decay denominator).
    pub sensitivity: f64,
    /// Center bias: value offset for continuous attributes, index offset for
    /// discrete ones.
    #[serde(default)]
    pub drift: f64,
    /// Mirror the legitimate output around the domain midpoint before
    /// drifting (continuous only).
    #[serde(default)]
    pub reflect: bool,
    /// Candidate grid resolution over the attribute domain.
    #[serde(default = "default_grid")]
    pub grid_points: usize,
}

fn default_grid() -> usize {
    101
}

impl Default for RopaParams {
    fn default() -> Self {
        RopaParams { sensitivity: 1.0, drift: 0.0, reflect: false, grid_points: 101 }
    }
}

/// Normalized exponential-decay weights over the candidate set. The sum is
/// exactly renormalized to 1.
pub fn decay_weights(
    center: f64,
    candidates: &[f64],
    epsilon: f64,
    sensitivity: f64,
) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::invalid("empty candidate set"));
    }
    if !(sensitivity > 0.0) {
        return Err(Error::config("sensitivity must be positive"));
    }
    let dmin = candidates
        .iter()
        .map(|x| (x - center).abs())
        .fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = candidates
        .iter()
        .map(|x| (-epsilon * ((x - center).abs() - dmin) / sensitivity).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Draw one candidate under the decay weights.
pub fn resample(
    center: f64,
    candidates: &[f64],
    epsilon: f64,
    sensitivity: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let weights = decay_weights(center, candidates, epsilon, sensitivity)?;
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for (x, w) in candidates.iter().zip(&weights) {
        cum += w;
        if u < cum {
            return Ok(*x);
        }
    }
    Ok(*candidates.last().unwrap())
}

/// Resample poisoned devices' outputs of an already-perturbed dataset.
pub fn apply_ropa(
    perturbed: &TimeSeriesDataset,
    cfg: &AttackConfig,
    ldp: &LdpConfig,
    seed: u64,
) -> Result<(TimeSeriesDataset, AttackTrace)> {
    apply_ropa_in(perturbed, cfg, ldp, seed, 0..perturbed.n_times())
}

pub fn apply_ropa_in(
    perturbed: &TimeSeriesDataset,
    cfg: &AttackConfig,
    ldp: &LdpConfig,
    seed: u64,
    active: Range<usize>,
) -> Result<(TimeSeriesDataset, AttackTrace)> {
    cfg.validate(perturbed.n_devices(), perturbed.n_attributes())?;
    let params = match &cfg.params {
        ModeParams::Ropa(p) => p,
        _ => return Err(Error::config("attack config is not output-poisoning")),
    };
    if !perturbed.stage_history().contains(&Provenance::Perturbed) {
        return Err(Error::invalid("output poisoning operates on post-LDP data"));
    }
    let j = cfg.target_attribute;
    let kind = perturbed.kind(j).clone();
    let n_times = perturbed.n_times();
    let epsilon = ldp.epsilon;

    let candidates: Vec<f64> = match &kind {
        AttributeKind::Continuous { lo, hi } => {
            if params.grid_points < 1 {
                return Err(Error::invalid("empty candidate set"));
            }
            if params.grid_points == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..params.grid_points)
                    .map(|g| lo + (hi - lo) * g as f64 / (params.grid_points - 1) as f64)
                    .collect()
            }
        }
        AttributeKind::Discrete { categories } => (0..categories.len()).map(|c| c as f64).collect(),
    };

    let mut out = perturbed.clone();
    let mut pattern = vec![0.0; perturbed.n_devices() * n_times];
    let labels: Vec<bool> = (0..perturbed.n_devices()).map(|i| cfg.is_member(i)).collect();

    if !cfg.poisoned.is_empty() {
        for &device in &cfg.poisoned {
            let mut prev = 0.0;
            for t in active.clone() {
                let legit = perturbed.value(device, j, t);
                let center = match &kind {
                    AttributeKind::Continuous { lo, hi } => {
                        let base = if params.reflect { lo + hi - legit } else { legit };
                        base + params.drift
                    }
                    AttributeKind::Discrete { categories } => {
                        let cats = categories.len() as i64;
                        ((legit as i64 + params.drift.round() as i64).rem_euclid(cats)) as f64
                    }
                };
                let mut rng = stream(seed, "attack/ropa", &[device as u64, j as u64, t as u64]);
                let drawn = resample(center, &candidates, epsilon, params.sensitivity, &mut rng)?;
                let capped = cap_pattern(drawn - legit, prev, cfg);
                prev = capped;
                let value = match &kind {
                    AttributeKind::Continuous { .. } => legit + capped,
                    AttributeKind::Discrete { categories } => {
                        (legit + capped.round()).clamp(0.0, categories.len() as f64 - 1.0)
                    }
                };
                pattern[device * n_times + t] = value - legit;
                out.set_value(device, j, t, value);
            }
        }
        out.push_stage(Provenance::Poisoned)?;
    }

    let trace = AttackTrace::from_pattern(j, labels, pattern, n_times);
    Ok((out, trace))
}

/// Standard perturbation followed by output resampling.
#[derive(Debug, Clone)]
pub struct RopaAttack {
    cfg: AttackConfig,
}

impl RopaAttack {
    pub fn new(cfg: AttackConfig) -> Self {
        RopaAttack { cfg }
    }
}

impl Attack for RopaAttack {
    fn name(&self) -> &'static str {
        "ropa"
    }

    fn run(
        &self,
        raw: &TimeSeriesDataset,
        cfgs: &[LdpConfig],
        seed: u64,
        active: Range<usize>,
    ) -> Result<(TimeSeriesDataset, AttackTrace)> {
        let perturbed = perturb_dataset(raw, cfgs, seed)?;
        apply_ropa_in(&perturbed, &self.cfg, &cfgs[self.cfg.target_attribute], seed, active)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ldp::MechanismKind;
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_weights() {
        // eps = 1, sensitivity = 1, candidates {z, z +- 0.5}
        let w = decay_weights(0.0, &[0.0, -0.5, 0.5], 1.0, 1.0).unwrap();
        assert_relative_eq!(w[0], 0.4519, epsilon = 1e-4);
        assert_relative_eq!(w[1], 0.2741, epsilon = 1e-4);
        assert_relative_eq!(w[2], 0.2741, epsilon = 1e-4);
        assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn infinite_sensitivity_is_uniform() {
        let w = decay_weights(0.3, &[0.0, 0.25, 0.5, 0.75], 1.0, 1e18).unwrap();
        for x in w {
            assert_relative_eq!(x, 0.25, epsilon = 1e-9);
        }
    }

    #[test]
    fn degenerate_support_returns_the_legit_output() {
        let mut rng = stream(1, "t", &[]);
        let out = resample(0.4, &[0.4], 1.0, 1.0, &mut rng).unwrap();
        assert_eq!(out, 0.4);
    }

    #[test]
    fn empty_candidates_is_an_error() {
        assert!(decay_weights(0.0, &[], 1.0, 1.0).is_err());
    }

    fn perturbed_ds() -> TimeSeriesDataset {
        let raw = TimeSeriesDataset::new(
            vec!["d0".into(), "d1".into()],
            vec!["a".into()],
            vec![AttributeKind::Continuous { lo: -1.0, hi: 1.0 }],
            vec![0, 1, 2],
            vec![0.1, 0.2, 0.3, -0.1, -0.2, -0.3],
        )
        .unwrap();
        let cfgs = vec![LdpConfig::new(
            MechanismKind::Laplace,
            1.0,
            0.95,
            AttributeKind::Continuous { lo: -1.0, hi: 1.0 },
        )];
        perturb_dataset(&raw, &cfgs, 31).unwrap()
    }

    #[test]
    fn empty_set_is_identity_and_raw_input_rejected() {
        let ds = perturbed_ds();
        let ldp = LdpConfig::new(
            MechanismKind::Laplace,
            1.0,
            0.95,
            AttributeKind::Continuous { lo: -1.0, hi: 1.0 },
        );
        let cfg = AttackConfig {
            target_attribute: 0,
            poisoned: vec![],
            magnitude_cap: None,
            variation_cap: None,
            params: ModeParams::Ropa(RopaParams::default()),
        };
        let (out, _) = apply_ropa(&ds, &cfg, &ldp, 5).unwrap();
        assert_eq!(out, ds);

        let raw = TimeSeriesDataset::new(
            vec!["d0".into()],
            vec!["a".into()],
            vec![AttributeKind::Continuous { lo: -1.0, hi: 1.0 }],
            vec![0],
            vec![0.0],
        )
        .unwrap();
        assert!(apply_ropa(&raw, &cfg, &ldp, 5).is_err());
    }

    #[test]
    fn members_land_on_the_candidate_grid() {
        let ds = perturbed_ds();
        let ldp = LdpConfig::new(
            MechanismKind::Laplace,
            1.0,
            0.95,
            AttributeKind::Continuous { lo: -1.0, hi: 1.0 },
        );
        let cfg = AttackConfig {
            target_attribute: 0,
            poisoned: vec![1],
            magnitude_cap: None,
            variation_cap: None,
            params: ModeParams::Ropa(RopaParams {
                sensitivity: 0.5,
                drift: 0.2,
                reflect: false,
                grid_points: 101,
            }),
        };
        let (out, trace) = apply_ropa(&ds, &cfg, &ldp, 5).unwrap();
        assert_eq!(out.provenance(), Provenance::Poisoned);
        for t in 0..3 {
            let v = out.value(1, 0, t);
            assert!((-1.0..=1.0).contains(&v));
            // value sits on the 101-point grid
            let g = (v + 1.0) / 2.0 * 100.0;
            assert!((g - g.round()).abs() < 1e-9, "{v} not on grid");
            // non-member untouched
            assert_eq!(out.value(0, 0, t), ds.value(0, 0, t));
            assert_eq!(trace.pattern_at(1, t), v - ds.value(1, 0, t));
        }
    }
}
