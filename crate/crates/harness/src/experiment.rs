//! Grid execution: one cell = (attack mode, ratio, seed index). Cells run in
//! a work-stealing pool, each on RNG streams derived from the master seed
//! and its own coordinates, so results are independent of scheduling and
//! reproducible in isolation.

use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use poisonlab_core::attack::{
    attack_for, measure_distortion, sample_poisoned_set, AttackConfig, BudgetRule,
    DipaParams, DipaShift, DistortionReport, DrpaParams, ModeParams, RopaParams,
};
use poisonlab_core::dataset::{generate_synthetic, ingest_csv, AttributeKind, TimeSeriesDataset};
use poisonlab_core::detect::{DetectionPipeline, DetectionReport};
use poisonlab_core::error::{Error, Result};
use poisonlab_core::identify::{
    evaluate, mine_features, predict_scores, train_forest_with_oob, BiasFeatureMatrix, ForestParams,
    IdentificationMetrics, ReferenceStats,
};
use poisonlab_core::ldp::{perturb_dataset, sqr_series, LdpConfig, SqrValue};
use poisonlab_core::rng::derive_seed;

use crate::config::{DatasetConfig, ExperimentConfig};

/// Grid-cell coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellKey {
    pub mode: String,
    pub ratio_percent: u32,
    pub seed_index: u32,
}

impl CellKey {
    pub fn file_stem(&self, config_hash: &str) -> String {
        format!(
            "cell-{}-r{:02}-s{:02}-{config_hash}",
            self.mode, self.ratio_percent, self.seed_index
        )
    }
}

/// Attribute-level detection outcome against the known target.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl DetectionCounts {
    pub fn f2(&self) -> f64 {
        let tp = self.true_positives as f64;
        let p_den = tp + self.false_positives as f64;
        let r_den = tp + self.false_negatives as f64;
        let precision = if p_den == 0.0 { 1.0 } else { tp / p_den };
        let recall = if r_den == 0.0 { 1.0 } else { tp / r_den };
        if 4.0 * precision + recall == 0.0 {
            0.0
        } else {
            5.0 * precision * recall / (4.0 * precision + recall)
        }
    }
}

/// Everything one grid cell produces. Serialized as the deterministic JSON
/// artifact; wall-clock stays out of it by design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellArtifacts {
    pub key: CellKey,
    pub target_attribute: usize,
    pub target_kind: String,
    pub poisoned_devices: Vec<usize>,
    pub detection: DetectionReport,
    pub detection_counts: DetectionCounts,
    /// FE-enhanced identification at device level.
    pub identification: IdentificationMetrics,
    /// Raw-feature ablation baseline.
    pub identification_baseline: IdentificationMetrics,
    pub estimated_ratio: f64,
    pub distortion: DistortionReport,
}

/// One cell's result plus its wall-clock (reported in the text metadata).
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub artifacts: CellArtifacts,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailedCell {
    pub key: CellKey,
    pub error: String,
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub cells: Vec<CellOutcome>,
    pub failed: Vec<FailedCell>,
    pub config_hash: String,
}

/// Time split of the horizon: history | calibration | observation.
#[derive(Debug, Clone)]
pub struct TimeSplit {
    pub history: Range<usize>,
    pub calibration: Range<usize>,
    pub observation: Range<usize>,
}

pub fn time_split(cfg: &ExperimentConfig, n_times: usize) -> Result<TimeSplit> {
    let h = (n_times as f64 * cfg.detector.history_fraction).floor() as usize;
    let c = (n_times as f64 * cfg.detector.calibration_fraction).floor() as usize;
    let w = cfg.detector.window;
    if h < 2 * w || c < 2 * w || n_times - h - c < 2 * w {
        return Err(Error::config(format!(
            "horizon {n_times} too short to split around window {w}"
        )));
    }
    Ok(TimeSplit {
        history: 0..h,
        calibration: h..h + c,
        observation: h + c..n_times,
    })
}

/// Materialize the raw dataset for one cell.
fn cell_dataset(cfg: &ExperimentConfig, master: u64) -> Result<TimeSeriesDataset> {
    match &cfg.dataset {
        DatasetConfig::Synthetic { .. } => {
            generate_synthetic(&cfg.generator_spec()?, derive_seed(master, "data", &[]))
        }
        DatasetConfig::Csv { path, .. } => {
            let schema = cfg.ingest_schema().expect("csv config has a schema");
            ingest_csv(path, &schema)
        }
    }
}

/// Build the mode-specific attack configuration for one cell.
pub fn build_attack_config(
    cfg: &ExperimentConfig,
    mode: &str,
    target: usize,
    kind: &AttributeKind,
    poisoned: Vec<usize>,
) -> Result<AttackConfig> {
    let params = match mode {
        "dipa" => {
            let shift = if cfg.attack.dipa.shift == "max" {
                DipaShift::MaxDeviation
            } else {
                let v: f64 = cfg.attack.dipa.shift.parse().expect("validated numeric shift");
                if kind.is_continuous() {
                    DipaShift::Additive { magnitude: v }
                } else {
                    DipaShift::Category { offset: v.round() as i64 }
                }
            };
            ModeParams::Dipa(DipaParams { shift, clamp: cfg.attack.dipa.clamp, env_range: None })
        }
        "drpa" => {
            let remap = match kind {
                AttributeKind::Discrete { categories } if cfg.attack.drpa.remap_rotation => {
                    let k = categories.len();
                    Some((0..k).map(|c| (c + k / 2) % k).collect())
                }
                _ => None,
            };
            let scale = if kind.is_continuous() {
                kind.domain_size() / cfg.ldp.epsilon
            } else {
                1.0
            };
            ModeParams::Drpa(DrpaParams {
                budget_rule: BudgetRule::RandomSplit {
                    concentration: cfg.attack.drpa.concentration,
                },
                noise_bias: cfg.attack.drpa.noise_bias * scale,
                category_remap: remap,
            })
        }
        "ropa" => {
            let drift = match kind {
                AttributeKind::Continuous { .. } => cfg.attack.ropa.drift,
                AttributeKind::Discrete { categories } => cfg
                    .attack
                    .ropa
                    .category_drift
                    .unwrap_or(categories.len() as i64 / 2) as f64,
            };
            ModeParams::Ropa(RopaParams {
                sensitivity: cfg.attack.ropa.sensitivity,
                drift,
                reflect: kind.is_continuous() && cfg.attack.ropa.reflect,
                grid_points: cfg.attack.ropa.grid_points,
            })
        }
        other => return Err(Error::config(format!("unknown attack mode {other:?}"))),
    };
    Ok(AttackConfig {
        target_attribute: target,
        poisoned,
        magnitude_cap: cfg.attack.magnitude_cap,
        variation_cap: cfg.attack.variation_cap,
        params,
    })
}

/// Target attribute for a cell: explicit list or rotation over all.
fn cell_target(cfg: &ExperimentConfig, k: usize, seed_index: u32) -> usize {
    if cfg.attack.target_attributes.is_empty() {
        seed_index as usize % k
    } else {
        cfg.attack.target_attributes[seed_index as usize % cfg.attack.target_attributes.len()]
    }
}

/// Run one grid cell end to end.
pub fn run_cell(cfg: &ExperimentConfig, key: &CellKey) -> Result<CellArtifacts> {
    let master = derive_seed(
        cfg.seed,
        &format!("cell/{}", key.mode),
        &[key.ratio_percent as u64, key.seed_index as u64],
    );
    run_cell_inner(cfg, key, master)
}

fn run_cell_inner(cfg: &ExperimentConfig, key: &CellKey, master: u64) -> Result<CellArtifacts> {
    let raw = cell_dataset(cfg, master)?;
    let split = time_split(cfg, raw.n_times())?;
    let cfgs = cfg.ldp_configs(raw.kinds());
    let target = cell_target(cfg, raw.n_attributes(), key.seed_index);
    let kind = raw.kind(target).clone();
    let ratio = key.ratio_percent as f64 / 100.0;
    let poisoned = sample_poisoned_set(raw.n_devices(), ratio, derive_seed(master, "members", &[]))?;

    let attack_cfg =
        build_attack_config(cfg, &key.mode, target, &kind, poisoned.clone())?;
    let attack = attack_for(&attack_cfg)?;
    let pipeline_seed = derive_seed(master, "pipeline", &[]);
    let (attacked, trace) = attack.run(&raw, &cfgs, pipeline_seed, split.observation.clone())?;

    // Detection on the observation segment.
    let history_raw = raw.slice_times(split.history.clone());
    let calibration_raw = raw.slice_times(split.calibration.clone());
    let observed = attacked.slice_times(split.observation.clone());
    let detector = DetectionPipeline::build(
        &history_raw,
        &calibration_raw,
        &cfgs,
        &cfg.detector_params(),
        derive_seed(master, "detect", &[]),
    )?;
    let detection = detector.detect(&observed)?;

    let truth_flagged = !poisoned.is_empty();
    let mut counts = DetectionCounts { true_positives: 0, false_positives: 0, false_negatives: 0 };
    for j in 0..raw.n_attributes() {
        let flagged = detection.flagged.contains(&j);
        match (flagged, truth_flagged && j == target) {
            (true, true) => counts.true_positives += 1,
            (true, false) => counts.false_positives += 1,
            (false, true) => counts.false_negatives += 1,
            (false, false) => {}
        }
    }

    // Identification on the target attribute.
    let labels: Vec<bool> = trace.labels.clone();
    let identification = identify(
        cfg,
        &observed,
        &raw,
        &split,
        &cfgs,
        target,
        &labels,
        master,
        true,
    )?;
    let identification_baseline = identify(
        cfg,
        &observed,
        &raw,
        &split,
        &cfgs,
        target,
        &labels,
        master,
        false,
    )?;

    // Distortion of the observation segment against the clean pipeline.
    let clean_observed =
        perturb_dataset(&raw, &cfgs, pipeline_seed)?.slice_times(split.observation.clone());
    let series = |ds: &TimeSeriesDataset| -> Result<Vec<Vec<SqrValue>>> {
        (0..ds.n_attributes()).map(|j| sqr_series(ds, j, &cfgs[j])).collect()
    };
    let distortion = measure_distortion(
        &series(&clean_observed)?,
        &series(&observed)?,
        &attack_cfg,
        raw.n_devices(),
        &cfgs[target],
    )?;

    Ok(CellArtifacts {
        key: key.clone(),
        target_attribute: target,
        target_kind: if kind.is_continuous() { "laplace".into() } else { "grr".into() },
        poisoned_devices: poisoned,
        detection,
        detection_counts: counts,
        identification: identification.clone(),
        identification_baseline,
        estimated_ratio: identification.estimated_ratio,
        distortion,
    })
}

/// Windowed feature mining, temporal 70/30 train/test split, forest
/// training, and per-device aggregation of test-window scores.
#[allow(clippy::too_many_arguments)]
fn identify(
    cfg: &ExperimentConfig,
    observed: &TimeSeriesDataset,
    raw: &TimeSeriesDataset,
    split: &TimeSplit,
    cfgs: &[LdpConfig],
    target: usize,
    labels: &[bool],
    master: u64,
    enhanced: bool,
) -> Result<IdentificationMetrics> {
    let n = observed.n_devices();
    let truth: Vec<bool> = labels.to_vec();
    if !truth.iter().any(|&l| l) {
        // Nothing to learn from a clean run; identification degenerates to
        // all-clean.
        return evaluate(&vec![false; n], &truth);
    }

    let width = cfg.miner.window.unwrap_or(cfg.detector.window);
    let n_windows = observed.n_times() / width;
    if n_windows < 2 {
        return Err(Error::invalid("observation too short for a train/test split"));
    }
    let train_windows = ((n_windows as f64) * 0.7).ceil() as usize;
    let train_windows = train_windows.clamp(1, n_windows - 1);

    // Reference statistics from the clean perturbed history.
    let reference_ds = perturb_dataset(
        &raw.slice_times(split.history.clone()),
        cfgs,
        derive_seed(master, "reference", &[]),
    )?;
    let reference_reports: Vec<f64> = (0..n)
        .flat_map(|i| reference_ds.series(i, target))
        .collect();
    let reference = ReferenceStats::from_reports(&reference_reports, observed.kind(target))?;

    let spec = cfg.miner_spec(enhanced);
    let mine = |w: usize| -> Result<BiasFeatureMatrix> {
        mine_features(
            observed,
            target,
            w * width..(w + 1) * width,
            &spec,
            &reference,
            derive_seed(master, if enhanced { "mine" } else { "mine-raw" }, &[w as u64]),
        )
    };

    // Stack training windows into one row set.
    let mut train_values = Vec::new();
    let mut train_labels = Vec::new();
    for w in 0..train_windows {
        let m = mine(w)?;
        train_values.extend_from_slice(&m.values);
        train_labels.extend_from_slice(&truth);
    }
    let train = BiasFeatureMatrix {
        feature: spec.feature.clone(),
        window_start: 0,
        n_devices: train_windows * n,
        width,
        values: train_values,
        labels: Some(train_labels),
    };
    let (forest, oob) = train_forest_with_oob(
        &train,
        &ForestParams {
            trees: cfg.classifier.trees,
            max_depth: cfg.classifier.max_depth,
            features_per_split: cfg.classifier.features_per_split,
            seed: derive_seed(master, if enhanced { "forest" } else { "forest-raw" }, &[]),
        },
    )?;

    let mean_scores = |range: Range<usize>| -> Result<Vec<f64>> {
        let mut scores = vec![0.0; n];
        let len = range.len().max(1) as f64;
        for w in range {
            let m = mine(w)?;
            for (i, s) in predict_scores(&forest, &m)?.into_iter().enumerate() {
                scores[i] += s;
            }
        }
        scores.iter_mut().for_each(|s| *s /= len);
        Ok(scores)
    };

    // Device-level decision threshold calibrated on out-of-bag scores (mean
    // OOB vote over each device's training-window rows).
    let mut calib_device = vec![0.0; n];
    for w in 0..train_windows {
        for i in 0..n {
            calib_device[i] += oob[w * n + i];
        }
    }
    calib_device.iter_mut().for_each(|s| *s /= train_windows as f64);
    let mut best_f2 = -1.0;
    let mut lo_cut = 0.5;
    let mut hi_cut = 0.5;
    for step in 1..50 {
        let cut = step as f64 * 0.02;
        let preds: Vec<bool> = calib_device.iter().map(|&s| s > cut).collect();
        let f2 = evaluate(&preds, &truth)?.f2;
        if f2 > best_f2 + 1e-12 {
            best_f2 = f2;
            lo_cut = cut;
            hi_cut = cut;
        } else if (f2 - best_f2).abs() <= 1e-12 {
            hi_cut = cut;
        }
    }
    let clean_max = calib_device
        .iter()
        .zip(&truth)
        .filter(|(_, &t)| !t)
        .map(|(&s, _)| s)
        .fold(0.0f64, f64::max);
    let vote_margin = 4.0 / cfg.classifier.trees.max(1) as f64;
    let midpoint = 0.5 * (lo_cut + hi_cut);
    // Cleanly separated calibration scores: hug the clean side (poisoned
    // votes sag on later windows, clean votes stay put). Overlapping scores:
    // the midpoint of the best-F2 plateau is the safer bet.
    let threshold = if best_f2 >= 0.999 {
        (clean_max + vote_margin).clamp(lo_cut, midpoint)
    } else {
        midpoint
    };

    // Average test-window vote fractions per device, thresholded.
    let device_scores = mean_scores(train_windows..n_windows)?;
    let predictions: Vec<bool> = device_scores.iter().map(|&s| s > threshold).collect();
    evaluate(&predictions, &truth)
}

/// Run the full grid. Failed cells are recorded and skipped.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let mut keys = Vec::new();
    for mode in &cfg.attack.modes {
        for &ratio in &cfg.attack.ratios_percent {
            for seed_index in 0..cfg.seeds_per_cell {
                keys.push(CellKey { mode: mode.clone(), ratio_percent: ratio, seed_index });
            }
        }
    }
    let outcomes: Vec<(CellKey, std::result::Result<CellOutcome, String>)> = keys
        .par_iter()
        .map(|key| {
            let started = Instant::now();
            let result = run_cell(cfg, key)
                .map(|artifacts| CellOutcome {
                    artifacts,
                    wall_clock_secs: started.elapsed().as_secs_f64(),
                })
                .map_err(|e| format!("{} r{} s{}: {e}", key.mode, key.ratio_percent, key.seed_index));
            (key.clone(), result)
        })
        .collect();

    let mut cells = Vec::new();
    let mut failed = Vec::new();
    for (key, outcome) in outcomes {
        match outcome {
            Ok(cell) => cells.push(cell),
            Err(error) => failed.push(FailedCell { key, error }),
        }
    }
    // Deterministic order regardless of scheduling.
    cells.sort_by(|a, b| {
        (&a.artifacts.key.mode, a.artifacts.key.ratio_percent, a.artifacts.key.seed_index).cmp(&(
            &b.artifacts.key.mode,
            b.artifacts.key.ratio_percent,
            b.artifacts.key.seed_index,
        ))
    });
    failed.sort_by(|a, b| {
        (&a.key.mode, a.key.ratio_percent, a.key.seed_index).cmp(&(
            &b.key.mode,
            b.key.ratio_percent,
            b.key.seed_index,
        ))
    });
    Ok(RunArtifacts { cells, failed, config_hash: cfg.content_hash() })
}

/// Write per-cell JSON artifacts, the run summary, and the metadata block
/// (the only place wall-clock and timestamps appear).
pub fn write_artifacts(run: &RunArtifacts, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for cell in &run.cells {
        let path = dir.join(format!(
            "{}.json",
            cell.artifacts.key.file_stem(&run.config_hash)
        ));
        std::fs::write(&path, serde_json::to_string_pretty(&cell.artifacts).unwrap())?;
    }
    let summary = summary_json(run);
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary).unwrap())?;

    let mut meta = String::from("# run metadata (timestamps and wall-clock only)\n");
    for cell in &run.cells {
        meta.push_str(&format!(
            "{}: {:.3}s\n",
            cell.artifacts.key.file_stem(&run.config_hash),
            cell.wall_clock_secs
        ));
    }
    for f in &run.failed {
        meta.push_str(&format!(
            "FAILED {} r{} s{}: {}\n",
            f.key.mode, f.key.ratio_percent, f.key.seed_index, f.error
        ));
    }
    std::fs::write(dir.join("run_meta.txt"), meta)?;
    Ok(())
}

/// Deterministic summary document of a run.
pub fn summary_json(run: &RunArtifacts) -> serde_json::Value {
    serde_json::json!({
        "config_hash": run.config_hash,
        "cells": run.cells.iter().map(|c| &c.artifacts).collect::<Vec<_>>(),
        "failed": run.failed,
    })
}
