//! Scratch diagnostics (ignored by default; run with --ignored).

use poisonlab::config::desk_scale_config;
use poisonlab::experiment::{run_cell, CellKey};

#[test]
#[ignore]
fn probe_modes() {
    let feature = std::env::var("PROBE_FEATURE").unwrap_or_else(|_| "mae".into());
    let trees: usize = std::env::var("PROBE_TREES").ok().and_then(|v| v.parse().ok()).unwrap_or(100);
    let fps: Option<usize> = std::env::var("PROBE_FPS").ok().and_then(|v| v.parse().ok());
    let depth: usize = std::env::var("PROBE_DEPTH").ok().and_then(|v| v.parse().ok()).unwrap_or(8);
    let modes = std::env::var("PROBE_MODES").unwrap_or_else(|_| "dipa,drpa,ropa".into());
    let ratios = std::env::var("PROBE_RATIOS").unwrap_or_else(|_| "5,13,25,50".into());
    let targets = std::env::var("PROBE_TARGET").ok();
    let mut cfg = desk_scale_config(42, "/tmp/probe-out".into());
    cfg.miner.feature = feature.clone();
    cfg.classifier.trees = trees;
    cfg.classifier.max_depth = depth;
    cfg.classifier.features_per_split = fps;
    if let Some(t) = &targets {
        cfg.attack.target_attributes = vec![t.parse().unwrap()];
    }
    for mode in modes.split(',') {
        for ratio in ratios.split(',').map(|r| r.parse::<u32>().unwrap()) {
            let mut f2s = Vec::new();
            let mut ests = Vec::new();
            let mut dets = Vec::new();
            for seed in 0..4u32 {
                let cell = run_cell(
                    &cfg,
                    &CellKey { mode: mode.into(), ratio_percent: ratio, seed_index: seed },
                )
                .unwrap();
                f2s.push(cell.identification.f2);
                ests.push(cell.estimated_ratio);
                dets.push(cell.detection_counts.f2());
            }
            let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            println!(
                "{mode} r{ratio:2} [{feature} t{trees} d{depth}] | id f2 {:?} avg {:.3} | est avg {:.3} | det avg {:.2}",
                f2s.iter().map(|f| format!("{f:.2}")).collect::<Vec<_>>(),
                avg(&f2s),
                avg(&ests),
                avg(&dets),
            );
        }
    }
}
