//! Summary tables: true vs estimated attack ratio per (mechanism, mode),
//! mean and standard deviation over seeds, plus a detection F2 summary.
//! The text table prints exactly the numbers stored in the JSON document
//! (both are rounded to four decimals first).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use poisonlab_core::error::{Error, Result};

use crate::experiment::CellArtifacts;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioRow {
    pub mechanism: String,
    pub mode: String,
    pub true_ratio: f64,
    pub estimate_mean: f64,
    pub estimate_sd: f64,
    pub identification_f2_mean: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionRow {
    pub mode: String,
    pub ratio: f64,
    pub detection_f2: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub ratio_estimation: Vec<RatioRow>,
    pub detection: Vec<DetectionRow>,
}

fn round4(x: f64) -> f64 {
    (x * 10_000.0).round() / 10_000.0
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    (m, v.sqrt())
}

/// Build the summary from per-cell artifacts.
pub fn summarize(cells: &[CellArtifacts]) -> Summary {
    let mut ratio_groups: BTreeMap<(String, String, u32), Vec<&CellArtifacts>> = BTreeMap::new();
    let mut detect_groups: BTreeMap<(String, u32), Vec<&CellArtifacts>> = BTreeMap::new();
    for cell in cells {
        ratio_groups
            .entry((cell.target_kind.clone(), cell.key.mode.clone(), cell.key.ratio_percent))
            .or_default()
            .push(cell);
        detect_groups
            .entry((cell.key.mode.clone(), cell.key.ratio_percent))
            .or_default()
            .push(cell);
    }

    let ratio_estimation = ratio_groups
        .into_iter()
        .map(|((mechanism, mode, ratio), group)| {
            let estimates: Vec<f64> = group.iter().map(|c| c.estimated_ratio).collect();
            let f2s: Vec<f64> = group.iter().map(|c| c.identification.f2).collect();
            let (em, esd) = mean_sd(&estimates);
            let (fm, _) = mean_sd(&f2s);
            RatioRow {
                mechanism,
                mode,
                true_ratio: round4(ratio as f64 / 100.0),
                estimate_mean: round4(em),
                estimate_sd: round4(esd),
                identification_f2_mean: round4(fm),
                cells: group.len(),
            }
        })
        .collect();

    let detection = detect_groups
        .into_iter()
        .map(|((mode, ratio), group)| {
            let tp: usize = group.iter().map(|c| c.detection_counts.true_positives).sum();
            let fp: usize = group.iter().map(|c| c.detection_counts.false_positives).sum();
            let fne: usize = group.iter().map(|c| c.detection_counts.false_negatives).sum();
            let pooled = crate::experiment::DetectionCounts {
                true_positives: tp,
                false_positives: fp,
                false_negatives: fne,
            };
            DetectionRow {
                mode,
                ratio: round4(ratio as f64 / 100.0),
                detection_f2: round4(pooled.f2()),
                cells: group.len(),
            }
        })
        .collect();

    Summary { ratio_estimation, detection }
}

/// Text rendering; every number is printed from the rounded JSON values.
pub fn render_text(summary: &Summary) -> String {
    let mut out = String::new();
    out.push_str("ratio estimation (true vs identified)\n");
    out.push_str("mechanism  mode   true     estimate mean +- sd        ident f2   cells\n");
    for r in &summary.ratio_estimation {
        out.push_str(&format!(
            "{:<10} {:<6} {:<8} {:<12} +- {:<12} {:<10} {}\n",
            r.mechanism,
            r.mode,
            r.true_ratio,
            r.estimate_mean,
            r.estimate_sd,
            r.identification_f2_mean,
            r.cells
        ));
    }
    out.push_str("\nattribute detection (pooled F2)\n");
    out.push_str("mode   ratio    f2       cells\n");
    for d in &summary.detection {
        out.push_str(&format!(
            "{:<6} {:<8} {:<8} {}\n",
            d.mode, d.ratio, d.detection_f2, d.cells
        ));
    }
    out
}

/// Load per-cell artifacts back from a run directory.
pub fn load_cells(dir: &Path) -> Result<Vec<CellArtifacts>> {
    let mut cells = Vec::new();
    if !dir.exists() {
        return Err(Error::config(format!("artifact directory {} not found", dir.display())));
    }
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("cell-") && n.ends_with(".json"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    for path in paths {
        let text = std::fs::read_to_string(&path)?;
        let cell: CellArtifacts =
            serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        cells.push(cell);
    }
    Ok(cells)
}

/// Write report.json and report.txt next to the artifacts.
pub fn write_report(summary: &Summary, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(summary).unwrap())?;
    std::fs::write(dir.join("report.txt"), render_text(summary))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_artifacts_give_an_empty_summary() {
        let s = summarize(&[]);
        assert!(s.ratio_estimation.is_empty());
        assert!(s.detection.is_empty());
        let text = render_text(&s);
        assert!(text.contains("ratio estimation"));
    }
}
