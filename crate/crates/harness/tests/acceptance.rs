//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the measured quantities before asserting.

use approx::assert_relative_eq;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use poisonlab::config::{desk_scale_config, ExperimentConfig};
use poisonlab::experiment::{run_cell, CellArtifacts, CellKey, DetectionCounts};
use poisonlab_core::attack::{
    attack_for, decay_weights, sample_poisoned_set, AttackConfig, BudgetRule, DipaParams,
    DipaShift, DrpaParams, ModeParams, RopaParams,
};
use poisonlab_core::dataset::{
    generate_synthetic, AttributeKind, AttributeSpec, GeneratorSpec, Provenance,
};
use poisonlab_core::detect::cca_from_covariances;
use poisonlab_core::identify::pool_metrics;
use poisonlab_core::ldp::{
    mechanism_for, perturb_dataset, tolerance_grr, tolerance_laplace, GrrMechanism,
    LaplaceMechanism, LdpConfig, Mechanism, MechanismKind,
};
use poisonlab_core::rng::stream;
use poisonlab_core::stats::{pearson, variance};

fn cont_domain() -> AttributeKind {
    AttributeKind::Continuous { lo: -1.0, hi: 1.0 }
}

fn verdict(name: &str, pass: bool, detail: &str) -> bool {
    println!("criterion {name}: {} - {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn pool_detection(cells: &[&CellArtifacts]) -> DetectionCounts {
    DetectionCounts {
        true_positives: cells.iter().map(|c| c.detection_counts.true_positives).sum(),
        false_positives: cells.iter().map(|c| c.detection_counts.false_positives).sum(),
        false_negatives: cells.iter().map(|c| c.detection_counts.false_negatives).sum(),
    }
}

// -------------------------------------------------------------------------
// 1. Mechanism correctness
// -------------------------------------------------------------------------

#[test]
fn criterion_1_mechanism_correctness() {
    // Laplace noise variance within 5% of 2 b^2 over 1e5 draws.
    let lap = LaplaceMechanism::new(1.0, -1.0, 1.0).unwrap();
    let mut rng = stream(101, "acc1/lap", &[]);
    let draws: Vec<f64> = (0..100_000).map(|_| lap.perturb(0.0, &mut rng)).collect();
    let var = variance(&draws);
    let var_ok = (7.6..=8.4).contains(&var);

    // GRR channel frequencies within 0.01 of (p, q).
    let grr = GrrMechanism::new(1.0, 4).unwrap();
    let mut rng = stream(101, "acc1/grr", &[]);
    let n = 100_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[grr.perturb_category(2, &mut rng)] += 1;
    }
    let p_hat = counts[2] as f64 / n as f64;
    let q_hats: Vec<f64> = [0, 1, 3].iter().map(|&c| counts[c] as f64 / n as f64).collect();
    let freq_ok = (p_hat - grr.keep_probability()).abs() <= 0.01
        && q_hats.iter().all(|q| (q - grr.flip_probability()).abs() <= 0.01);

    // The channel ratio is exactly e^eps.
    let ratio_ok = grr.probability_ratio() == 1.0f64.exp();

    let pass = verdict(
        "1 (mechanism correctness)",
        var_ok && freq_ok && ratio_ok,
        &format!("laplace var {var:.3} in [7.6, 8.4]; grr p_hat {p_hat:.4}; ratio exact {ratio_ok}"),
    );
    assert!(pass);
}

// -------------------------------------------------------------------------
// 2. Fault-tolerance coverage and exact closed forms
// -------------------------------------------------------------------------

#[test]
fn criterion_2_fault_tolerance_coverage() {
    let lap_cfg = LdpConfig::new(MechanismKind::Laplace, 1.0, 0.95, cont_domain());
    let grr_cfg = LdpConfig::new(
        MechanismKind::Grr,
        1.0,
        0.95,
        AttributeKind::Discrete { categories: (0..10).map(|c| format!("c{c}")).collect() },
    );

    // Exact closed forms, independently arranged.
    let alpha_lap = tolerance_laplace(56, &lap_cfg).unwrap().alpha;
    let expect_lap = 2.0f64.sqrt() * 2.0 / (1.0 * (56.0 * (1.0 - 0.95)).sqrt());
    let alpha_grr = tolerance_grr(56, &grr_cfg).unwrap().alpha;
    let e = 1.0f64.exp();
    let expect_grr =
        2.0 * (e + 10.0 - 2.0) / ((e - 1.0) * (std::f64::consts::PI * 56.0 * 0.05).sqrt());
    assert_relative_eq!(alpha_lap, expect_lap, epsilon = 1e-12);
    assert_relative_eq!(alpha_grr, expect_grr, epsilon = 1e-12);
    let forms_ok = (alpha_lap - 1.6903).abs() < 1e-3 && (alpha_grr - 4.2063).abs() < 1e-3;

    // Coverage: deviation beyond alpha in at most 10% of 1000 trials.
    let mut exceed = [0usize; 2];
    for (m, cfg) in [&lap_cfg, &grr_cfg].into_iter().enumerate() {
        let mech = mechanism_for(cfg).unwrap();
        let truth: Vec<f64> = (0..56)
            .map(|i| match cfg.mechanism {
                MechanismKind::Laplace => (i as f64 / 55.0) - 0.5,
                MechanismKind::Grr => (i % 10) as f64,
            })
            .collect();
        let raw = mech.raw_statistic(&truth).unwrap();
        let alpha = mech.tolerance(56, 0.95).unwrap().alpha;
        for trial in 0..1000u64 {
            let mut rng = stream(202, "acc2", &[m as u64, trial]);
            let reports: Vec<f64> = truth.iter().map(|&d| mech.perturb(d, &mut rng)).collect();
            if mech.estimate(&reports).unwrap().l1_distance(&raw) >= alpha {
                exceed[m] += 1;
            }
        }
    }
    let coverage_ok = exceed[0] <= 100 && exceed[1] <= 100;

    let pass = verdict(
        "2 (fault-tolerance coverage)",
        forms_ok && coverage_ok,
        &format!(
            "alpha_lap {alpha_lap:.4}, alpha_grr {alpha_grr:.4}, exceedance {}/1000 and {}/1000",
            exceed[0], exceed[1]
        ),
    );
    assert!(pass);
}

// -------------------------------------------------------------------------
// 3. Attack no-op and stealth constraints
// -------------------------------------------------------------------------

#[test]
fn criterion_3_attack_noop_and_stealth() {
    let mut rng = stream(303, "acc3", &[]);
    let mut noop_ok = true;
    let mut range_ok = true;
    let mut budget_ok = true;
    let mut weights_ok = true;
    for case in 0..8u64 {
        let n = 3 + (rng.gen::<u64>() % 5) as usize;
        let t = 4 + (rng.gen::<u64>() % 6) as usize;
        let spec = GeneratorSpec {
            n_devices: n,
            n_times: t,
            attributes: vec![
                AttributeSpec {
                    name: "c".into(),
                    kind: cont_domain(),
                    level: 0.0,
                    trend: 0.0,
                    seasonal_amplitude: 0.1,
                    seasonal_period: 6.0,
                    temporal_std: 0.2,
                    temporal_persistence: 0.5,
                    noise_std: 0.2,
                    stickiness: 0.0,
                },
                AttributeSpec {
                    name: "d".into(),
                    kind: AttributeKind::Discrete {
                        categories: (0..4).map(|c| format!("c{c}")).collect(),
                    },
                    level: 0.0,
                    trend: 0.0,
                    seasonal_amplitude: 0.2,
                    seasonal_period: 6.0,
                    temporal_std: 0.2,
                    temporal_persistence: 0.5,
                    noise_std: 0.2,
                    stickiness: 0.3,
                },
            ],
            correlations: vec![poisonlab_core::dataset::CorrelationSpec { a: 0, b: 1, rho: 0.4 }],
        };
        let raw = generate_synthetic(&spec, 7000 + case).unwrap();
        let cfgs = vec![
            LdpConfig::new(MechanismKind::Laplace, 1.0, 0.95, cont_domain()),
            LdpConfig::new(MechanismKind::Grr, 1.0, 0.95, raw.kind(1).clone()),
        ];
        let clean = perturb_dataset(&raw, &cfgs, 909 + case).unwrap();

        for params in [
            ModeParams::Dipa(DipaParams::default()),
            ModeParams::Drpa(DrpaParams::default()),
            ModeParams::Ropa(RopaParams::default()),
        ] {
            // Empty poisoned set: bit-identical pipelines.
            let empty = AttackConfig {
                target_attribute: 0,
                poisoned: vec![],
                magnitude_cap: None,
                variation_cap: None,
                params: params.clone(),
            };
            let (out, _) =
                attack_for(&empty).unwrap().run(&raw, &cfgs, 909 + case, 0..t).unwrap();
            noop_ok &= out == clean;
        }

        // DIPA range containment on the raw stage.
        let members = sample_poisoned_set(n, 0.5, case).unwrap();
        let dipa = AttackConfig {
            target_attribute: 0,
            poisoned: members.clone(),
            magnitude_cap: None,
            variation_cap: None,
            params: ModeParams::Dipa(DipaParams {
                shift: DipaShift::Additive { magnitude: 0.7 },
                clamp: true,
                env_range: None,
            }),
        };
        let (poisoned_raw, _) = poisonlab_core::attack::apply_dipa(&raw, &dipa).unwrap();
        range_ok &= poisoned_raw.validate_domains().is_ok()
            && poisoned_raw.provenance() == Provenance::Poisoned;

        // DRPA budget-sum exactness.
        let drpa = AttackConfig {
            target_attribute: 0,
            poisoned: members.clone(),
            magnitude_cap: None,
            variation_cap: None,
            params: ModeParams::Drpa(DrpaParams {
                budget_rule: BudgetRule::RandomSplit { concentration: 1.0 },
                noise_bias: 0.0,
                category_remap: None,
            }),
        };
        let budgets =
            poisonlab_core::attack::drpa::assign_budgets(&drpa, 1.0, 1000 + case).unwrap();
        budget_ok &= (budgets.iter().sum::<f64>() - members.len() as f64).abs() <= 1e-12
            && budgets.iter().all(|&b| b > 0.0);

        // ROPA weight normalization.
        let candidates: Vec<f64> = (0..101).map(|g| -1.0 + g as f64 / 50.0).collect();
        let center = rng.gen::<f64>() * 2.0 - 1.0;
        let w = decay_weights(center, &candidates, 1.0, 0.25).unwrap();
        weights_ok &= (w.iter().sum::<f64>() - 1.0).abs() <= 1e-12;
    }
    let pass = verdict(
        "3 (no-op and stealth constraints)",
        noop_ok && range_ok && budget_ok && weights_ok,
        &format!("noop {noop_ok}, range {range_ok}, budgets {budget_ok}, weights {weights_ok}"),
    );
    assert!(pass);
}

// -------------------------------------------------------------------------
// 4. Correlation-baseline oracle equivalence
// -------------------------------------------------------------------------

#[test]
fn criterion_4_correlation_oracles() {
    // Single-window weighted Pearson equals the textbook routine.
    let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.9).sin()).collect();
    let y: Vec<f64> = (0..12).map(|i| 0.4 * (i as f64 * 0.9).sin() + 0.1 * i as f64).collect();
    let ours = poisonlab_core::detect::weighted_pearson(
        &x,
        &y,
        12,
        poisonlab_core::detect::WeightMode::Variance,
    )
    .unwrap();
    let textbook = pearson(&x, &y).unwrap();
    let pearson_ok = (ours - textbook).abs() <= 1e-9;

    // Lambda-zero sparse CCA matches eigen-decomposition CCA on random 3x3
    // covariance instances.
    let mut rng = stream(404, "acc4", &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let a = DMatrix::from_fn(6, 6, |_, _| rng.gen::<f64>() - 0.5);
        let joint = &a * a.transpose() + DMatrix::identity(6, 6) * 0.5;
        let sxx = joint.view((0, 0), (3, 3)).into_owned();
        let syy = joint.view((3, 3), (3, 3)).into_owned();
        let sxy = joint.view((0, 3), (3, 3)).into_owned();
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            m.row_iter().map(|r| r.iter().cloned().collect()).collect()
        };
        let ours = cca_from_covariances(&rows(&sxx), &rows(&syy), &rows(&sxy), 0.0).unwrap();

        let inv_sqrt = |m: &DMatrix<f64>| -> DMatrix<f64> {
            let eig = SymmetricEigen::new(m.clone());
            let mut d = DMatrix::zeros(3, 3);
            for i in 0..3 {
                d[(i, i)] = 1.0 / eig.eigenvalues[i].max(1e-300).sqrt();
            }
            &eig.eigenvectors * d * eig.eigenvectors.transpose()
        };
        let syy_inv = {
            let eig = SymmetricEigen::new(syy.clone());
            let mut d = DMatrix::zeros(3, 3);
            for i in 0..3 {
                d[(i, i)] = 1.0 / eig.eigenvalues[i].max(1e-300);
            }
            &eig.eigenvectors * d * eig.eigenvectors.transpose()
        };
        let s = inv_sqrt(&sxx);
        let m = &s * &sxy * syy_inv * sxy.transpose() * &s;
        let sym = 0.5 * (&m + m.transpose());
        let oracle = SymmetricEigen::new(sym)
            .eigenvalues
            .iter()
            .cloned()
            .fold(0.0f64, f64::max)
            .sqrt();
        worst = worst.max((ours - oracle).abs());
    }
    let cca_ok = worst <= 1e-6;

    let pass = verdict(
        "4 (correlation oracle equivalence)",
        pearson_ok && cca_ok,
        &format!("pearson diff {:.2e}, worst cca diff {worst:.2e}", (ours - textbook).abs()),
    );
    assert!(pass);
}

// -------------------------------------------------------------------------
// 5. Detector soundness on clean data
// -------------------------------------------------------------------------

#[test]
fn criterion_5_clean_soundness() {
    let cfg = desk_scale_config(505, "/tmp/acc5".into());
    assert!((cfg.detector.quantile - 0.99).abs() < 1e-12);
    let mut flagged_runs = 0;
    for seed in 0..50u32 {
        let cell = run_cell(
            &cfg,
            &CellKey { mode: "dipa".into(), ratio_percent: 0, seed_index: seed },
        )
        .unwrap();
        if !cell.detection.flagged.is_empty() {
            flagged_runs += 1;
        }
    }
    let pass = verdict(
        "5 (clean-data soundness)",
        flagged_runs * 100 <= 5 * 50,
        &format!("{flagged_runs}/50 clean runs flagged an attribute (limit 5%)"),
    );
    assert!(pass);
}

// -------------------------------------------------------------------------
// 6. Desk-scale detection trend
// -------------------------------------------------------------------------

#[test]
fn criterion_6_detection_trend() {
    let cfg = desk_scale_config(606, "/tmp/acc6".into());
    let mut all_pass = true;
    let mut details = Vec::new();
    for mode in ["drpa", "ropa"] {
        let cells: Vec<CellArtifacts> = (0..10u32)
            .map(|seed| {
                run_cell(&cfg, &CellKey { mode: mode.into(), ratio_percent: 13, seed_index: seed })
                    .unwrap()
            })
            .collect();
        let cont: Vec<&CellArtifacts> =
            cells.iter().filter(|c| c.target_kind == "laplace").collect();
        let disc: Vec<&CellArtifacts> = cells.iter().filter(|c| c.target_kind == "grr").collect();
        let cont_f2 = pool_detection(&cont).f2();
        let disc_f2 = pool_detection(&disc).f2();
        all_pass &= cont_f2 >= 0.9 && disc_f2 >= 0.6;
        details.push(format!("{mode}: continuous {cont_f2:.3} (need 0.9), discrete {disc_f2:.3} (need 0.6)"));
    }
    let pass = verdict("6 (detection trend at 13% ratio)", all_pass, &details.join("; "));
    assert!(pass);
}

// -------------------------------------------------------------------------
// 7. Identification headline
// -------------------------------------------------------------------------

fn identification_config(seed: u64, mode: &str) -> ExperimentConfig {
    let mut cfg = desk_scale_config(seed, "/tmp/acc7".into());
    // Continuous targets; the bias feature matches the attack family
    // (location-sensitive for input/rule poisoning, dispersion-sensitive for
    // output poisoning).
    cfg.attack.target_attributes = (0..7).collect();
    cfg.miner.feature = if mode == "ropa" { "mae".into() } else { "mean".into() };
    cfg
}

#[test]
fn criterion_7_identification_headline() {
    let seeds = 6u32;
    let mut all_pass = true;
    let mut details = Vec::new();
    let mut best_gap: f64 = -1.0;
    for mode in ["dipa", "drpa", "ropa"] {
        let cfg = identification_config(707, mode);
        for ratio in [5u32, 10, 25, 50] {
            let cells: Vec<CellArtifacts> = (0..seeds)
                .map(|seed| {
                    run_cell(&cfg, &CellKey { mode: mode.into(), ratio_percent: ratio, seed_index: seed })
                        .unwrap()
                })
                .collect();
            let fe = pool_metrics(&cells.iter().map(|c| c.identification).collect::<Vec<_>>());
            let base = pool_metrics(
                &cells.iter().map(|c| c.identification_baseline).collect::<Vec<_>>(),
            );
            best_gap = best_gap.max(fe.f2 - base.f2);
            if fe.f2 < 0.9 {
                all_pass = false;
            }
            details.push(format!("{mode}@{ratio}%: fe {: .3} raw {:.3}", fe.f2, base.f2));
        }
    }
    let degradation_ok = best_gap >= 0.1;
    all_pass &= degradation_ok;
    details.push(format!("max fe-over-raw gap {best_gap:.3} (need >= 0.1)"));
    let pass = verdict("7 (identification headline)", all_pass, &details.join("; "));
    assert!(pass);
}

// -------------------------------------------------------------------------
// 8. Ratio estimation at 5%
// -------------------------------------------------------------------------

#[test]
fn criterion_8_ratio_estimation() {
    let seeds = 6u32;
    let mut all_pass = true;
    let mut details = Vec::new();
    for mode in ["dipa", "drpa", "ropa"] {
        for (mechanism, target) in [("laplace", 0usize), ("grr", 7)] {
            let mut cfg = identification_config(808, mode);
            cfg.attack.target_attributes = vec![target];
            let estimates: Vec<f64> = (0..seeds)
                .map(|seed| {
                    run_cell(&cfg, &CellKey { mode: mode.into(), ratio_percent: 5, seed_index: seed })
                        .unwrap()
                        .estimated_ratio
                })
                .collect();
            let mean_est = estimates.iter().sum::<f64>() / estimates.len() as f64;
            let ok = (mean_est - 0.05).abs() <= 0.01;
            all_pass &= ok;
            details.push(format!("{mode}/{mechanism}: {mean_est:.4}"));
        }
    }
    let pass = verdict("8 (ratio estimation +-1pp at 5%)", all_pass, &details.join("; "));
    assert!(pass);
}

// -------------------------------------------------------------------------
// 9. Robustness sweeps
// -------------------------------------------------------------------------

#[test]
fn criterion_9_robustness_sweeps() {
    let seeds = 4u32;
    let mut all_pass = true;
    let mut details = Vec::new();
    for mode in ["dipa", "drpa", "ropa"] {
        for epsilon in [0.5, 1.0, 2.0, 4.0] {
            let mut cfg = identification_config(909, mode);
            cfg.ldp.epsilon = epsilon;
            let cells: Vec<CellArtifacts> = (0..seeds)
                .map(|seed| {
                    run_cell(&cfg, &CellKey { mode: mode.into(), ratio_percent: 5, seed_index: seed })
                        .unwrap()
                })
                .collect();
            let fe = pool_metrics(&cells.iter().map(|c| c.identification).collect::<Vec<_>>());
            all_pass &= fe.f2 >= 0.9;
            details.push(format!("{mode} eps {epsilon}: {: .3}", fe.f2));
        }
        for window in [2usize, 4, 12, 24] {
            let mut cfg = identification_config(919, mode);
            cfg.miner.window = Some(window);
            let cells: Vec<CellArtifacts> = (0..seeds)
                .map(|seed| {
                    run_cell(&cfg, &CellKey { mode: mode.into(), ratio_percent: 5, seed_index: seed })
                        .unwrap()
                })
                .collect();
            let fe = pool_metrics(&cells.iter().map(|c| c.identification).collect::<Vec<_>>());
            all_pass &= fe.f2 >= 0.9;
            details.push(format!("{mode} w {window}: {:.3}", fe.f2));
        }
    }
    let pass = verdict("9 (robustness sweeps)", all_pass, &details.join("; "));
    assert!(pass);
}

// -------------------------------------------------------------------------
// 10. Determinism
// -------------------------------------------------------------------------

#[test]
fn criterion_10_determinism() {
    let cfg = desk_scale_config(1010, "/tmp/acc10".into());
    let key = CellKey { mode: "drpa".into(), ratio_percent: 13, seed_index: 2 };
    let a = serde_json::to_vec(&run_cell(&cfg, &key).unwrap()).unwrap();
    let b = serde_json::to_vec(&run_cell(&cfg, &key).unwrap()).unwrap();
    let pass = verdict(
        "10 (determinism)",
        a == b,
        &format!("artifact bytes {} == {}", a.len(), b.len()),
    );
    assert!(pass);
}
