//! Experiment configuration: one TOML file drives dataset construction,
//! perturbation, the attack grid, detection, and identification.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use poisonlab_core::dataset::{
    AttributeKind, AttributeSpec, CorrelationSpec, GeneratorSpec, IngestColumn, IngestSchema,
};
use poisonlab_core::detect::{DetectorParams, WeightMode};
use poisonlab_core::error::{Error, Result};
use poisonlab_core::identify::{Aggregation, BiasFeatureSpec};
use poisonlab_core::ldp::LdpConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    /// Artifact directory; overridable with POISONLAB_OUTPUT_DIR.
    pub output_dir: PathBuf,
    #[serde(default = "default_seeds_per_cell")]
    pub seeds_per_cell: u32,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub ldp: LdpSection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub miner: MinerSection,
    #[serde(default)]
    pub classifier: ClassifierSection,
}

fn default_seeds_per_cell() -> u32 {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Synthetic telemetry; omitted attribute list uses the desk-scale
    /// default of 7 continuous + 3 discrete attributes.
    Synthetic {
        n_devices: usize,
        n_times: usize,
        #[serde(default)]
        attributes: Vec<AttributeSpec>,
        #[serde(default)]
        correlations: Vec<CorrelationSpec>,
    },
    /// CSV ingestion with a declared column schema.
    Csv {
        path: PathBuf,
        columns: Vec<CsvColumn>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvColumn {
    pub name: String,
    pub kind: AttributeKind,
    #[serde(default)]
    pub rescale: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdpSection {
    pub epsilon: f64,
    /// Mechanism-level confidence used for reported tolerance bounds.
    pub delta: f64,
}

impl Default for LdpSection {
    fn default() -> Self {
        LdpSection { epsilon: 1.0, delta: 0.95 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    /// Attack registry names to run.
    pub modes: Vec<String>,
    /// Attack ratios in percent (0..=50).
    pub ratios_percent: Vec<u32>,
    /// Target attributes to rotate over; empty means all.
    #[serde(default)]
    pub target_attributes: Vec<usize>,
    #[serde(default)]
    pub magnitude_cap: Option<f64>,
    #[serde(default)]
    pub variation_cap: Option<f64>,
    #[serde(default)]
    pub dipa: DipaSection,
    #[serde(default)]
    pub drpa: DrpaSection,
    #[serde(default)]
    pub ropa: RopaSection,
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            modes: vec!["dipa".into(), "drpa".into(), "ropa".into()],
            ratios_percent: (0..=50).collect(),
            target_attributes: Vec::new(),
            magnitude_cap: None,
            variation_cap: None,
            dipa: DipaSection::default(),
            drpa: DrpaSection::default(),
            ropa: RopaSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipaSection {
    /// "max" pushes to the remote end of the valid range; a number is an
    /// additive shift (continuous) or category offset (discrete).
    pub shift: String,
    pub clamp: bool,
}

impl Default for DipaSection {
    fn default() -> Self {
        DipaSection { shift: "max".into(), clamp: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrpaSection {
    pub concentration: f64,
    pub noise_bias: f64,
    /// Rotate the discrete encoding by half the category count.
    pub remap_rotation: bool,
}

impl Default for DrpaSection {
    fn default() -> Self {
        DrpaSection { concentration: 1.0, noise_bias: 1.0, remap_rotation: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RopaSection {
    pub sensitivity: f64,
    pub drift: f64,
    pub reflect: bool,
    /// Discrete center offset; None uses half the category count.
    #[serde(default)]
    pub category_drift: Option<i64>,
    pub grid_points: usize,
}

impl Default for RopaSection {
    fn default() -> Self {
        RopaSection {
            sensitivity: 0.25,
            drift: 1.0,
            reflect: true,
            category_drift: None,
            grid_points: 101,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    /// Window length: statistic aggregation, correlation windows, stability
    /// windows, and the identification feature width.
    pub window: usize,
    pub bootstrap: usize,
    /// Detector-stage confidence (tolerance margins, bootstrap bands).
    pub delta: f64,
    pub lambda: f64,
    pub quantile: f64,
    pub weight: WeightMode,
    pub per_dimension_thresholds: bool,
    pub min_breaches: usize,
    pub calibration_replicates: usize,
    /// Leading fraction of the timeline used for baselines.
    pub history_fraction: f64,
    /// Fraction after the history used for threshold calibration.
    pub calibration_fraction: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            window: 12,
            bootstrap: 200,
            delta: 0.5,
            lambda: 0.1,
            quantile: 0.99,
            weight: WeightMode::Variance,
            per_dimension_thresholds: true,
            min_breaches: 2,
            calibration_replicates: 4,
            history_fraction: 0.25,
            calibration_fraction: 0.125,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinerSection {
    pub feature: String,
    pub samples: usize,
    pub fraction: f64,
    pub aggregation: Aggregation,
    /// Feature-matrix width; None reuses the detector window.
    #[serde(default)]
    pub window: Option<usize>,
}

impl Default for MinerSection {
    fn default() -> Self {
        MinerSection {
            feature: "mae".into(),
            samples: 20,
            fraction: 0.5,
            aggregation: Aggregation::Mean,
            window: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSection {
    pub algorithm: String,
    pub trees: usize,
    pub max_depth: usize,
    /// Features considered per split; None means ceil(sqrt(width)).
    #[serde(default)]
    pub features_per_split: Option<usize>,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        ClassifierSection {
            algorithm: "forest".into(),
            trees: 100,
            max_depth: 8,
            features_per_split: None,
        }
    }
}

/// Desk-scale default attribute mix: 7 continuous + 3 discrete attributes
/// with a chained correlation structure.
pub fn default_attributes() -> (Vec<AttributeSpec>, Vec<CorrelationSpec>) {
    let mut attributes = Vec::with_capacity(10);
    for j in 0..7 {
        attributes.push(AttributeSpec {
            name: format!("c{j}"),
            kind: AttributeKind::Continuous { lo: -1.0, hi: 1.0 },
            level: -0.3,
            trend: 0.0,
            seasonal_amplitude: 0.15,
            seasonal_period: 48.0,
            temporal_std: 0.3,
            temporal_persistence: 0.8,
            noise_std: 0.25,
            stickiness: 0.0,
        });
    }
    for j in 0..3 {
        attributes.push(AttributeSpec {
            name: format!("d{j}"),
            kind: AttributeKind::Discrete {
                categories: (0..5).map(|c| format!("k{c}")).collect(),
            },
            level: 0.0,
            trend: 0.0,
            seasonal_amplitude: 0.4,
            seasonal_period: 48.0,
            temporal_std: 0.3,
            temporal_persistence: 0.8,
            noise_std: 0.3,
            stickiness: 0.4,
        });
    }
    // Two equicorrelated continuous blocks, one discrete block, and weak
    // cross links; positive definite with minimum eigenvalue ~0.12.
    let mut correlations = Vec::new();
    for i in 0..4 {
        for j in (i + 1)..4 {
            correlations.push(CorrelationSpec { a: i, b: j, rho: 0.65 });
        }
    }
    for i in 4..7 {
        for j in (i + 1)..7 {
            correlations.push(CorrelationSpec { a: i, b: j, rho: 0.65 });
        }
    }
    for i in 7..10 {
        for j in (i + 1)..10 {
            correlations.push(CorrelationSpec { a: i, b: j, rho: 0.5 });
        }
    }
    correlations.push(CorrelationSpec { a: 0, b: 7, rho: 0.3 });
    correlations.push(CorrelationSpec { a: 1, b: 8, rho: 0.3 });
    correlations.push(CorrelationSpec { a: 4, b: 9, rho: 0.3 });
    (attributes, correlations)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml(&text)
    }

    /// Resolved generator spec (defaults filled in).
    pub fn generator_spec(&self) -> Result<GeneratorSpec> {
        match &self.dataset {
            DatasetConfig::Synthetic { n_devices, n_times, attributes, correlations } => {
                let (attrs, corrs) = if attributes.is_empty() {
                    default_attributes()
                } else {
                    (attributes.clone(), correlations.clone())
                };
                Ok(GeneratorSpec {
                    n_devices: *n_devices,
                    n_times: *n_times,
                    attributes: attrs,
                    correlations: corrs,
                })
            }
            DatasetConfig::Csv { .. } => {
                Err(Error::config("csv datasets carry their own attribute schema"))
            }
        }
    }

    pub fn ingest_schema(&self) -> Option<IngestSchema> {
        match &self.dataset {
            DatasetConfig::Csv { columns, .. } => Some(IngestSchema {
                columns: columns
                    .iter()
                    .map(|c| IngestColumn {
                        name: c.name.clone(),
                        kind: c.kind.clone(),
                        rescale: c.rescale,
                    })
                    .collect(),
            }),
            DatasetConfig::Synthetic { .. } => None,
        }
    }

    /// Per-attribute LDP configs for a given attribute-kind list.
    pub fn ldp_configs(&self, kinds: &[AttributeKind]) -> Vec<LdpConfig> {
        kinds
            .iter()
            .map(|k| LdpConfig::for_domain(k.clone(), self.ldp.epsilon, self.ldp.delta))
            .collect()
    }

    pub fn detector_params(&self) -> DetectorParams {
        DetectorParams {
            window: self.detector.window,
            bootstrap: self.detector.bootstrap,
            delta: self.detector.delta,
            lambda: self.detector.lambda,
            quantile: self.detector.quantile,
            weight_mode: self.detector.weight,
            per_dimension_thresholds: self.detector.per_dimension_thresholds,
            min_breaches: self.detector.min_breaches,
            calibration_replicates: self.detector.calibration_replicates,
        }
    }

    pub fn miner_spec(&self, enhanced: bool) -> BiasFeatureSpec {
        BiasFeatureSpec {
            feature: self.miner.feature.clone(),
            samples: self.miner.samples,
            fraction: self.miner.fraction,
            aggregation: self.miner.aggregation,
            enhanced,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds_per_cell == 0 {
            return Err(Error::config("seeds_per_cell must be at least 1"));
        }
        if !(self.ldp.epsilon > 0.0) {
            return Err(Error::config("epsilon must be positive"));
        }
        if !(0.0..1.0).contains(&self.ldp.delta) {
            return Err(Error::config("delta must lie in [0, 1)"));
        }
        for r in &self.attack.ratios_percent {
            if *r > 50 {
                return Err(Error::config("attack ratios must lie in [0, 50] percent"));
            }
        }
        for mode in &self.attack.modes {
            if !poisonlab_core::attack::attack_names().contains(&mode.as_str()) {
                return Err(Error::config(format!("unknown attack mode {mode:?}")));
            }
        }
        if self.attack.dipa.shift != "max" && self.attack.dipa.shift.parse::<f64>().is_err() {
            return Err(Error::config("dipa shift must be \"max\" or a number"));
        }
        let d = &self.detector;
        if !(d.history_fraction > 0.0 && d.calibration_fraction > 0.0) {
            return Err(Error::config("history and calibration fractions must be positive"));
        }
        if d.history_fraction + d.calibration_fraction >= 0.9 {
            return Err(Error::config("history plus calibration must leave room to observe"));
        }
        poisonlab_core::identify::create_feature(&self.miner.feature)?;
        if !poisonlab_core::identify::classifier_names()
            .contains(&self.classifier.algorithm.as_str())
        {
            return Err(Error::config(format!(
                "unknown classifier {:?}",
                self.classifier.algorithm
            )));
        }
        if let DatasetConfig::Synthetic { attributes, .. } = &self.dataset {
            if !attributes.is_empty() {
                self.generator_spec()?.validate()?;
            }
        }
        for t in &self.attack.target_attributes {
            let k = match &self.dataset {
                DatasetConfig::Synthetic { attributes, .. } => {
                    if attributes.is_empty() {
                        10
                    } else {
                        attributes.len()
                    }
                }
                DatasetConfig::Csv { columns, .. } => columns.len(),
            };
            if *t >= k {
                return Err(Error::config(format!("target attribute {t} out of range")));
            }
        }
        Ok(())
    }

    /// Stable content hash of the configuration (hex, 16 chars).
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// A ready-to-run desk-scale config used by tests and documentation.
pub fn desk_scale_config(seed: u64, output_dir: PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        output_dir,
        seeds_per_cell: 10,
        dataset: DatasetConfig::Synthetic {
            n_devices: 56,
            n_times: 288,
            attributes: Vec::new(),
            correlations: Vec::new(),
        },
        ldp: LdpSection::default(),
        attack: AttackSection::default(),
        detector: DetectorSection::default(),
        miner: MinerSection::default(),
        classifier: ClassifierSection::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml_round_trips() {
        let text = r#"
seed = 7
output_dir = "out"

[dataset]
source = "synthetic"
n_devices = 56
n_times = 288
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.attack.ratios_percent.len(), 51);
        let spec = cfg.generator_spec().unwrap();
        assert_eq!(spec.attributes.len(), 10);
        spec.validate().unwrap();
        assert_eq!(cfg.content_hash().len(), 16);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let base = desk_scale_config(1, "out".into());
        let mut bad = base.clone();
        bad.attack.ratios_percent = vec![60];
        assert!(bad.validate().is_err());

        let mut bad = base.clone();
        bad.attack.modes = vec!["nope".into()];
        assert!(bad.validate().is_err());

        let mut bad = base.clone();
        bad.miner.feature = "bogus".into();
        assert!(bad.validate().is_err());

        let mut bad = base;
        bad.ldp.epsilon = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn default_attribute_mix_is_generatable() {
        let cfg = desk_scale_config(1, "out".into());
        let spec = cfg.generator_spec().unwrap();
        let ds = poisonlab_core::dataset::generate_synthetic(&spec, 3).unwrap();
        assert_eq!(ds.n_attributes(), 10);
        assert_eq!(ds.n_devices(), 56);
    }
}
