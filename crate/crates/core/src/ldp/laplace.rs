//! Laplace mechanism for continuous attributes.

use rand::{Rng, RngCore};

use super::{LdpConfig, Mechanism, MechanismKind, SqrValue, ToleranceBound};
use crate::dataset::AttributeKind;
use crate::error::{Error, Result};

/// Adds Laplace(0, |X|/epsilon) noise where |X| = hi - lo. Outputs are not
/// clamped: the mean estimator relies on unbiased noise, and the tolerance
/// bound assumes it.
#[derive(Debug, Clone)]
pub struct LaplaceMechanism {
    epsilon: f64,
    lo: f64,
    hi: f64,
}

impl LaplaceMechanism {
    pub fn new(epsilon: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::config("epsilon must be positive and finite"));
        }
        AttributeKind::Continuous { lo, hi }.validate()?;
        Ok(LaplaceMechanism { epsilon, lo, hi })
    }

    pub fn from_config(cfg: &LdpConfig) -> Result<Self> {
        match cfg.domain {
            AttributeKind::Continuous { lo, hi } => {
                if cfg.mechanism != MechanismKind::Laplace {
                    return Err(Error::config("config does not select the laplace mechanism"));
                }
                if !(0.0..1.0).contains(&cfg.delta) {
                    return Err(Error::config("delta must lie in [0, 1)"));
                }
                Self::new(cfg.epsilon, lo, hi)
            }
            AttributeKind::Discrete { .. } => {
                Err(Error::config("laplace mechanism requires a continuous domain"))
            }
        }
    }

    pub fn noise_scale(&self) -> f64 {
        (self.hi - self.lo) / self.epsilon
    }

    /// Inverse-CDF Laplace draw; reproducible under a seeded stream.
    pub fn sample_noise(&self, rng: &mut dyn RngCore) -> f64 {
        sample_laplace(self.noise_scale(), rng)
    }
}

pub(crate) fn sample_laplace(scale: f64, rng: &mut dyn RngCore) -> f64 {
    let mut u: f64 = rng.gen();
    while u <= 0.0 || u >= 1.0 {
        u = rng.gen();
    }
    let c = u - 0.5;
    -scale * c.signum() * (1.0 - 2.0 * c.abs()).ln()
}

impl Mechanism for LaplaceMechanism {
    fn name(&self) -> &'static str {
        "laplace"
    }

    fn kind(&self) -> MechanismKind {
        MechanismKind::Laplace
    }

    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn perturb(&self, value: f64, rng: &mut dyn RngCore) -> f64 {
        value + self.sample_noise(rng)
    }

    fn estimate(&self, reports: &[f64]) -> Result<SqrValue> {
        if reports.is_empty() {
            return Err(Error::invalid("cannot estimate a mean from no reports"));
        }
        Ok(SqrValue::Mean(reports.iter().sum::<f64>() / reports.len() as f64))
    }

    fn raw_statistic(&self, values: &[f64]) -> Result<SqrValue> {
        self.estimate(values)
    }

    fn tolerance(&self, n: usize, delta: f64) -> Result<ToleranceBound> {
        if n == 0 {
            return Err(Error::invalid("tolerance needs n >= 1"));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::config("delta must lie in [0, 1)"));
        }
        let width = self.hi - self.lo;
        let alpha = 2f64.sqrt() * width / (self.epsilon * (n as f64 * (1.0 - delta)).sqrt());
        Ok(ToleranceBound { alpha, delta, mechanism: MechanismKind::Laplace })
    }
}
