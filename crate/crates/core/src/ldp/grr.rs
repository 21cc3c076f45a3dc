//! Generalized randomized response for discrete attributes.

use rand::{Rng, RngCore};

use super::{LdpConfig, Mechanism, MechanismKind, SqrValue, ToleranceBound};
use crate::dataset::AttributeKind;
use crate::error::{Error, Result};
use crate::stats::project_to_simplex;

/// Keeps the true category with probability p = e^eps / (e^eps + |X| - 1)
/// and flips to each other category with probability q = 1 / (e^eps + |X| - 1).
///
/// The channel is defined by its ratio `exp_eps = p/q`; the float
/// probabilities are projections of it, so the privacy ratio is exact by
/// construction.
#[derive(Debug, Clone)]
pub struct GrrMechanism {
    epsilon: f64,
    exp_eps: f64,
    cardinality: usize,
}

impl GrrMechanism {
    pub fn new(epsilon: f64, cardinality: usize) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::config("epsilon must be positive and finite"));
        }
        if cardinality < 2 {
            return Err(Error::config("grr needs a domain with |X| >= 2"));
        }
        Ok(GrrMechanism { epsilon, exp_eps: epsilon.exp(), cardinality })
    }

    pub fn from_config(cfg: &LdpConfig) -> Result<Self> {
        match &cfg.domain {
            AttributeKind::Discrete { categories } => {
                if cfg.mechanism != MechanismKind::Grr {
                    return Err(Error::config("config does not select the grr mechanism"));
                }
                if !(0.0..1.0).contains(&cfg.delta) {
                    return Err(Error::config("delta must lie in [0, 1)"));
                }
                Self::new(cfg.epsilon, categories.len())
            }
            AttributeKind::Continuous { .. } => {
                Err(Error::config("grr mechanism requires a discrete domain"))
            }
        }
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    /// Probability of reporting the true category.
    pub fn keep_probability(&self) -> f64 {
        self.exp_eps / (self.exp_eps + self.cardinality as f64 - 1.0)
    }

    /// Probability of reporting any single other category.
    pub fn flip_probability(&self) -> f64 {
        1.0 / (self.exp_eps + self.cardinality as f64 - 1.0)
    }

    /// The defining channel ratio p/q = e^epsilon, exact.
    pub fn probability_ratio(&self) -> f64 {
        self.exp_eps
    }

    /// Perturb a category index.
    pub fn perturb_category(&self, category: usize, rng: &mut dyn RngCore) -> usize {
        debug_assert!(category < self.cardinality);
        let u: f64 = rng.gen();
        if u < self.keep_probability() {
            category
        } else {
            let other = (rng.gen::<f64>() * (self.cardinality - 1) as f64) as usize;
            let other = other.min(self.cardinality - 2);
            if other >= category {
                other + 1
            } else {
                other
            }
        }
    }

    /// Debiased frequency estimate from perturbed reports, projected onto
    /// the probability simplex.
    pub fn estimate_frequencies(&self, reports: &[usize]) -> Result<Vec<f64>> {
        if reports.is_empty() {
            return Err(Error::invalid("cannot estimate frequencies from no reports"));
        }
        let mut counts = vec![0usize; self.cardinality];
        for &r in reports {
            if r >= self.cardinality {
                return Err(Error::invalid(format!(
                    "report {r} out of range 0..{}",
                    self.cardinality
                )));
            }
            counts[r] += 1;
        }
        let n = reports.len() as f64;
        let p = self.keep_probability();
        let q = self.flip_probability();
        let debiased: Vec<f64> =
            counts.iter().map(|&c| (c as f64 / n - q) / (p - q)).collect();
        Ok(project_to_simplex(&debiased))
    }
}

impl Mechanism for GrrMechanism {
    fn name(&self) -> &'static str {
        "grr"
    }

    fn kind(&self) -> MechanismKind {
        MechanismKind::Grr
    }

    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn perturb(&self, value: f64, rng: &mut dyn RngCore) -> f64 {
        self.perturb_category(value as usize, rng) as f64
    }

    fn estimate(&self, reports: &[f64]) -> Result<SqrValue> {
        let cats: Vec<usize> = reports.iter().map(|&v| v as usize).collect();
        Ok(SqrValue::Frequency(self.estimate_frequencies(&cats)?))
    }

    fn raw_statistic(&self, values: &[f64]) -> Result<SqrValue> {
        if values.is_empty() {
            return Err(Error::invalid("cannot compute frequencies of no values"));
        }
        let mut hist = vec![0.0; self.cardinality];
        for &v in values {
            let c = v as usize;
            if c >= self.cardinality {
                return Err(Error::invalid(format!("value {v} is not a valid category")));
            }
            hist[c] += 1.0;
        }
        let n = values.len() as f64;
        for h in &mut hist {
            *h /= n;
        }
        Ok(SqrValue::Frequency(hist))
    }

    fn tolerance(&self, n: usize, delta: f64) -> Result<ToleranceBound> {
        if n == 0 {
            return Err(Error::invalid("tolerance needs n >= 1"));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::config("delta must lie in [0, 1)"));
        }
        let x = self.cardinality as f64;
        let alpha = 2.0 * (self.exp_eps + x - 2.0)
            / ((self.exp_eps - 1.0) * (std::f64::consts::PI * n as f64 * (1.0 - delta)).sqrt());
        Ok(ToleranceBound { alpha, delta, mechanism: MechanismKind::Grr })
    }
}
