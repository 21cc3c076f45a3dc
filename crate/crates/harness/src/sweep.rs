//! Parameter sweeps: one curve per metric, CSV rows keyed by
//! x, metric, mode, attribute, seed, value.

use std::path::Path;

use poisonlab_core::error::{Error, Result};

use crate::config::ExperimentConfig;
use crate::experiment::{run_experiment, CellOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDimension {
    AttackRatio,
    Epsilon,
    WindowLength,
}

impl std::str::FromStr for SweepDimension {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attack_ratio" => Ok(SweepDimension::AttackRatio),
            "epsilon" => Ok(SweepDimension::Epsilon),
            "window_length" => Ok(SweepDimension::WindowLength),
            other => Err(Error::config(format!(
                "unknown sweep dimension {other:?}; known: attack_ratio, epsilon, window_length"
            ))),
        }
    }
}

/// Default grids for the non-ratio sweep dimensions.
pub const EPSILON_GRID: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
pub const WINDOW_GRID: [usize; 5] = [2, 4, 8, 12, 24];

/// Metrics emitted per cell.
const METRICS: [&str; 4] =
    ["identification_f2", "identification_baseline_f2", "detection_f2", "estimated_ratio"];

fn rows_for(cells: &[CellOutcome], x: f64, out: &mut String, attributes: &[String]) {
    for cell in cells {
        let a = &cell.artifacts;
        let attr = &attributes[a.target_attribute];
        for metric in METRICS {
            let value = match metric {
                "identification_f2" => a.identification.f2,
                "identification_baseline_f2" => a.identification_baseline.f2,
                "detection_f2" => a.detection_counts.f2(),
                "estimated_ratio" => a.estimated_ratio,
                _ => unreachable!(),
            };
            out.push_str(&format!(
                "{x},{metric},{},{attr},{},{value}\n",
                a.key.mode, a.key.seed_index
            ));
        }
    }
}

/// Run the sweep and return the CSV text (also written by the CLI).
pub fn sweep(cfg: &ExperimentConfig, dimension: SweepDimension) -> Result<String> {
    let mut out = String::from("x,metric,mode,attribute,seed,value\n");
    let attribute_names: Vec<String> = match &cfg.dataset {
        crate::config::DatasetConfig::Synthetic { .. } => cfg
            .generator_spec()?
            .attributes
            .iter()
            .map(|a| a.name.clone())
            .collect(),
        crate::config::DatasetConfig::Csv { columns, .. } => {
            columns.iter().map(|c| c.name.clone()).collect()
        }
    };
    match dimension {
        SweepDimension::AttackRatio => {
            let run = run_experiment(cfg)?;
            let mut by_ratio: Vec<u32> = cfg.attack.ratios_percent.clone();
            by_ratio.sort_unstable();
            by_ratio.dedup();
            for ratio in by_ratio {
                let cells: Vec<CellOutcome> = run
                    .cells
                    .iter()
                    .filter(|c| c.artifacts.key.ratio_percent == ratio)
                    .cloned()
                    .collect();
                rows_for(&cells, ratio as f64 / 100.0, &mut out, &attribute_names);
            }
        }
        SweepDimension::Epsilon => {
            for epsilon in EPSILON_GRID {
                let mut point = cfg.clone();
                point.ldp.epsilon = epsilon;
                point.attack.ratios_percent = vec![5];
                let run = run_experiment(&point)?;
                rows_for(&run.cells, epsilon, &mut out, &attribute_names);
            }
        }
        SweepDimension::WindowLength => {
            for window in WINDOW_GRID {
                let mut point = cfg.clone();
                point.miner.window = Some(window);
                point.attack.ratios_percent = vec![5];
                let run = run_experiment(&point)?;
                rows_for(&run.cells, window as f64, &mut out, &attribute_names);
            }
        }
    }
    Ok(out)
}

pub fn write_sweep(csv: &str, dir: &Path, dimension: SweepDimension) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let name = match dimension {
        SweepDimension::AttackRatio => "sweep-attack_ratio.csv",
        SweepDimension::Epsilon => "sweep-epsilon.csv",
        SweepDimension::WindowLength => "sweep-window_length.csv",
    };
    let path = dir.join(name);
    std::fs::write(&path, csv)?;
    Ok(path)
}
