//! Rule poisoning: devices in M run a corrupted LDP mechanism.
//!
//! The corruption keeps the formal compliance indicator intact: per-device
//! budgets over M always sum to |M| times the nominal budget. Within that
//! envelope the attacker may skew individual budgets, add a location bias to
//! the noise (continuous), or remap the category encoding before randomized
//! response (discrete).

use std::ops::Range;


use serde::{Deserialize, Serialize};

use super::{cap_pattern, Attack, AttackConfig, AttackTrace, ModeParams};
use crate::dataset::{AttributeKind, Provenance, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::ldp::{
    dataset_mechanisms, GrrMechanism, LaplaceMechanism, LdpConfig, Mechanism, PERTURB_STREAM,
};
use crate::rng::stream;
use crate::stats::exponential;

/// How the total budget is split across poisoned devices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BudgetRule {
    /// Symmetric Dirichlet split of the total budget.
    RandomSplit {
        #[serde(default = "default_concentration")]
        concentration: f64,
    },
    /// Explicit per-member budgets; must be positive and sum to |M| * epsilon.
    Assigned { budgets: Vec<f64> },
}

fn default_concentration() -> f64 {
    1.0
}

impl Default for BudgetRule {
    fn default() -> Self {
        BudgetRule::RandomSplit { concentration: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrpaParams {
    #[serde(default)]
    pub budget_rule: BudgetRule,
    /// Location shift of the noise for poisoned continuous reports.
    #[serde(default)]
    pub noise_bias: f64,
    /// Encoding reconstruction for poisoned discrete reports: category c is
    /// encoded as remap[c] before randomized response.
    #[serde(default)]
    pub category_remap: Option<Vec<usize>>,
}

impl Default for DrpaParams {
    fn default() -> Self {
        DrpaParams { budget_rule: BudgetRule::default(), noise_bias: 0.0, category_remap: None }
    }
}

/// Compute the per-member budgets. The sum equals |M| * epsilon exactly
/// (last entry is fixed up against float drift).
pub fn assign_budgets(cfg: &AttackConfig, nominal_epsilon: f64, seed: u64) -> Result<Vec<f64>> {
    let params = match &cfg.params {
        ModeParams::Drpa(p) => p,
        _ => return Err(Error::config("attack config is not rule-poisoning")),
    };
    let m = cfg.poisoned.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let total = m as f64 * nominal_epsilon;
    let budgets = match &params.budget_rule {
        BudgetRule::RandomSplit { concentration } => {
            if !(concentration > &0.0) {
                return Err(Error::config("dirichlet concentration must be positive"));
            }
            let mut rng = stream(seed, "attack/budgets", &[]);
            // Gamma(c) draws; for c == 1 this is Exp(1).
            let gammas: Vec<f64> = (0..m)
                .map(|_| {
                    let mut g = 0.0;
                    // Sum-of-exponentials approximation only for integer c;
                    // concentrations here are 1.0 in practice.
                    let whole = concentration.floor().max(1.0) as usize;
                    for _ in 0..whole {
                        g += exponential(&mut rng);
                    }
                    g
                })
                .collect();
            let sum: f64 = gammas.iter().sum();
            let mut budgets: Vec<f64> = gammas.iter().map(|g| g / sum * total).collect();
            let partial: f64 = budgets[..m - 1].iter().sum();
            budgets[m - 1] = total - partial;
            budgets
        }
        BudgetRule::Assigned { budgets } => {
            if budgets.len() != m {
                return Err(Error::config(format!(
                    "{} assigned budgets for {m} poisoned devices",
                    budgets.len()
                )));
            }
            if (budgets.iter().sum::<f64>() - total).abs() > 1e-9 * total.max(1.0) {
                return Err(Error::config("assigned budgets do not sum to |M| * epsilon"));
            }
            budgets.clone()
        }
    };
    if budgets.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::config("every per-device budget must be positive"));
    }
    Ok(budgets)
}

/// Run the full perturbation pipeline with devices in M using the poisoned
/// mechanism on the target attribute. Bit-identical to `perturb_dataset`
/// for non-members, inactive times, and when M is empty.
pub fn apply_drpa(
    raw: &TimeSeriesDataset,
    cfg: &AttackConfig,
    cfgs: &[LdpConfig],
    seed: u64,
) -> Result<(TimeSeriesDataset, AttackTrace)> {
    apply_drpa_in(raw, cfg, cfgs, seed, 0..raw.n_times())
}

pub fn apply_drpa_in(
    raw: &TimeSeriesDataset,
    cfg: &AttackConfig,
    cfgs: &[LdpConfig],
    seed: u64,
    active: Range<usize>,
) -> Result<(TimeSeriesDataset, AttackTrace)> {
    cfg.validate(raw.n_devices(), raw.n_attributes())?;
    let params = match &cfg.params {
        ModeParams::Drpa(p) => p,
        _ => return Err(Error::config("attack config is not rule-poisoning")),
    };
    let mechs = dataset_mechanisms(raw, cfgs)?;
    let j = cfg.target_attribute;
    let kind = raw.kind(j).clone();
    let nominal_eps = cfgs[j].epsilon;
    let n_times = raw.n_times();
    let budgets = assign_budgets(cfg, nominal_eps, seed)?;

    if let Some(remap) = &params.category_remap {
        if let AttributeKind::Discrete { categories } = &kind {
            let cats = categories.len();
            if remap.len() != cats || remap.iter().any(|&c| c >= cats) {
                return Err(Error::config("category remap must map the label set into itself"));
            }
        }
    }

    // Poisoned per-member mechanisms for the target attribute.
    let member_mechs: Vec<Box<dyn Mechanism>> = budgets
        .iter()
        .map(|&eps_i| -> Result<Box<dyn Mechanism>> {
            match &kind {
                AttributeKind::Continuous { lo, hi } => {
                    Ok(Box::new(LaplaceMechanism::new(eps_i, *lo, *hi)?))
                }
                AttributeKind::Discrete { categories } => {
                    Ok(Box::new(GrrMechanism::new(eps_i, categories.len())?))
                }
            }
        })
        .collect::<Result<_>>()?;

    let mut out = raw.clone();
    if !cfg.poisoned.is_empty() {
        out.push_stage(Provenance::Poisoned)?;
    }
    out.push_stage(Provenance::Perturbed)?;

    let mut pattern = vec![0.0; raw.n_devices() * n_times];
    let labels: Vec<bool> = (0..raw.n_devices()).map(|i| cfg.is_member(i)).collect();

    for i in 0..raw.n_devices() {
        let member_idx = cfg.poisoned.iter().position(|&d| d == i);
        let mut prev = 0.0;
        for (jj, mech) in mechs.iter().enumerate() {
            for t in 0..n_times {
                let clean = raw.value(i, jj, t);
                // Nominal report from this cell's stream.
                let mut rng = stream(seed, PERTURB_STREAM, &[i as u64, jj as u64, t as u64]);
                let nominal = mech.perturb(clean, &mut rng);
                let value = match member_idx {
                    Some(mi) if jj == j && active.contains(&t) => {
                        // Same cell stream, consumed by the poisoned mechanism.
                        let mut rng =
                            stream(seed, PERTURB_STREAM, &[i as u64, jj as u64, t as u64]);
                        let poisoned = match &kind {
                            AttributeKind::Continuous { .. } => {
                                member_mechs[mi].perturb(clean + params.noise_bias, &mut rng)
                            }
                            AttributeKind::Discrete { .. } => {
                                let encoded = match &params.category_remap {
                                    Some(remap) => remap[clean as usize] as f64,
                                    None => clean,
                                };
                                member_mechs[mi].perturb(encoded, &mut rng)
                            }
                        };
                        let capped = cap_pattern(poisoned - nominal, prev, cfg);
                        prev = capped;
                        let v = nominal + capped;
                        pattern[i * n_times + t] = capped;
                        if kind.is_continuous() {
                            v
                        } else {
                            (v.round()).clamp(0.0, kind.cardinality() as f64 - 1.0)
                        }
                    }
                    _ => nominal,
                };
                out.set_value(i, jj, t, value);
            }
        }
    }

    let trace = AttackTrace::from_pattern(j, labels, pattern, n_times);
    Ok((out, trace))
}

/// Rule poisoning as a pipeline strategy.
#[derive(Debug, Clone)]
pub struct DrpaAttack {
    cfg: AttackConfig,
}

impl DrpaAttack {
    pub fn new(cfg: AttackConfig) -> Self {
        DrpaAttack { cfg }
    }
}

impl Attack for DrpaAttack {
    fn name(&self) -> &'static str {
        "drpa"
    }

    fn run(
        &self,
        raw: &TimeSeriesDataset,
        cfgs: &[LdpConfig],
        seed: u64,
        active: Range<usize>,
    ) -> Result<(TimeSeriesDataset, AttackTrace)> {
        apply_drpa_in(raw, &self.cfg, cfgs, seed, active)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ldp::{perturb_dataset, MechanismKind};

    fn raw() -> TimeSeriesDataset {
        TimeSeriesDataset::new(
            vec!["d0".into(), "d1".into(), "d2".into()],
            vec!["a".into()],
            vec![AttributeKind::Continuous { lo: -1.0, hi: 1.0 }],
            vec![0, 1, 2, 3],
            vec![0.1, 0.2, 0.3, 0.4, -0.1, -0.2, -0.3, -0.4, 0.0, 0.0, 0.0, 0.0],
        )
        .unwrap()
    }

    fn ldp() -> Vec<LdpConfig> {
        vec![LdpConfig::new(
            MechanismKind::Laplace,
            1.0,
            0.95,
            AttributeKind::Continuous { lo: -1.0, hi: 1.0 },
        )]
    }

    fn drpa_cfg(members: Vec<usize>, params: DrpaParams) -> AttackConfig {
        AttackConfig {
            target_attribute: 0,
            poisoned: members,
            magnitude_cap: None,
            variation_cap: None,
            params: ModeParams::Drpa(params),
        }
    }

    #[test]
    fn budget_sum_is_exact() {
        let cfg = drpa_cfg(vec![0, 1, 2], DrpaParams::default());
        let budgets = assign_budgets(&cfg, 1.0, 4).unwrap();
        assert_eq!(budgets.len(), 3);
        assert!(budgets.iter().all(|&b| b > 0.0));
        assert!((budgets.iter().sum::<f64>() - 3.0).abs() <= 1e-12);
    }

    #[test]
    fn assigned_budgets_are_validated() {
        let cfg = drpa_cfg(
            vec![0, 1],
            DrpaParams {
                budget_rule: BudgetRule::Assigned { budgets: vec![0.5, 1.5] },
                ..DrpaParams::default()
            },
        );
        assert_eq!(assign_budgets(&cfg, 1.0, 0).unwrap(), vec![0.5, 1.5]);

        let bad_sum = drpa_cfg(
            vec![0, 1],
            DrpaParams {
                budget_rule: BudgetRule::Assigned { budgets: vec![0.5, 0.5] },
                ..DrpaParams::default()
            },
        );
        assert!(assign_budgets(&bad_sum, 1.0, 0).is_err());

        let nonpositive = drpa_cfg(
            vec![0, 1],
            DrpaParams {
                budget_rule: BudgetRule::Assigned { budgets: vec![2.0, 0.0] },
                ..DrpaParams::default()
            },
        );
        assert!(assign_budgets(&nonpositive, 1.0, 0).is_err());
    }

    #[test]
    fn empty_set_matches_plain_ldp_bit_for_bit() {
        let cfg = drpa_cfg(vec![], DrpaParams::default());
        let (out, trace) = apply_drpa(&raw(), &cfg, &ldp(), 17).unwrap();
        let plain = perturb_dataset(&raw(), &ldp(), 17).unwrap();
        assert_eq!(out, plain);
        assert!(trace.pattern.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn location_bias_shifts_expected_report() {
        // With equal budgets the noise draw cancels against the nominal
        // report, leaving exactly the location bias as the pattern.
        let cfg = drpa_cfg(
            vec![1],
            DrpaParams {
                budget_rule: BudgetRule::Assigned { budgets: vec![1.0] },
                noise_bias: 0.1,
                category_remap: None,
            },
        );
        let (out, trace) = apply_drpa(&raw(), &cfg, &ldp(), 23).unwrap();
        let plain = perturb_dataset(&raw(), &ldp(), 23).unwrap();
        for t in 0..4 {
            assert!((out.value(1, 0, t) - plain.value(1, 0, t) - 0.1).abs() < 1e-12);
            assert!((trace.pattern_at(1, t) - 0.1).abs() < 1e-12);
            assert_eq!(out.value(0, 0, t), plain.value(0, 0, t));
        }
    }
}
