//! Property tests: CSV round-tripping and generator determinism.

use proptest::prelude::*;

use poisonlab_core::dataset::{
    export_csv, generate_synthetic, ingest_csv, AttributeKind, AttributeSpec, CorrelationSpec,
    GeneratorSpec, IngestColumn, IngestSchema, TimeSeriesDataset,
};

fn arb_dataset() -> impl Strategy<Value = TimeSeriesDataset> {
    (1usize..4, 1usize..4, 1usize..5, any::<u64>()).prop_map(|(n, k, t, seed)| {
        // Mixed attribute kinds keyed by index parity.
        let kinds: Vec<AttributeKind> = (0..k)
            .map(|j| {
                if j % 2 == 0 {
                    AttributeKind::Continuous { lo: -2.0, hi: 2.0 }
                } else {
                    AttributeKind::Discrete {
                        categories: vec!["low".into(), "mid".into(), "high".into()],
                    }
                }
            })
            .collect();
        let mut values = Vec::with_capacity(n * k * t);
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..n {
            for j in 0..k {
                for _ in 0..t {
                    let u = next();
                    values.push(match &kinds[j] {
                        AttributeKind::Continuous { lo, hi } => lo + u * (hi - lo),
                        AttributeKind::Discrete { categories } => {
                            ((u * categories.len() as f64) as usize)
                                .min(categories.len() - 1) as f64
                        }
                    });
                }
            }
        }
        TimeSeriesDataset::new(
            (0..n).map(|i| format!("dev-{i}")).collect(),
            (0..k).map(|j| format!("attr{j}")).collect(),
            kinds,
            (0..t as i64).collect(),
            values,
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_identity(ds in arb_dataset()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        export_csv(&ds, &path).unwrap();
        let schema = IngestSchema {
            columns: ds
                .attributes()
                .iter()
                .zip(ds.kinds())
                .map(|(name, kind)| IngestColumn {
                    name: name.clone(),
                    kind: kind.clone(),
                    rescale: false,
                })
                .collect(),
        };
        let back = ingest_csv(&path, &schema).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn generation_is_a_pure_function_of_spec_and_seed(seed in any::<u64>()) {
        let spec = GeneratorSpec {
            n_devices: 3,
            n_times: 10,
            attributes: vec![
                AttributeSpec {
                    name: "x".into(),
                    kind: AttributeKind::Continuous { lo: -1.0, hi: 1.0 },
                    level: 0.0,
                    trend: 0.1,
                    seasonal_amplitude: 0.2,
                    seasonal_period: 5.0,
                    temporal_std: 0.2,
            temporal_persistence: 0.7,
                    noise_std: 0.2,
                    stickiness: 0.0,
                },
                AttributeSpec {
                    name: "y".into(),
                    kind: AttributeKind::Discrete {
                        categories: vec!["a".into(), "b".into(), "c".into()],
                    },
                    level: 0.0,
                    trend: 0.0,
                    seasonal_amplitude: 0.3,
                    seasonal_period: 5.0,
                    temporal_std: 0.2,
            temporal_persistence: 0.7,
                    noise_std: 0.2,
                    stickiness: 0.4,
                },
            ],
            correlations: vec![CorrelationSpec { a: 0, b: 1, rho: 0.5 }],
        };
        let a = generate_synthetic(&spec, seed).unwrap();
        let b = generate_synthetic(&spec, seed).unwrap();
        prop_assert_eq!(&a, &b);
        a.validate_domains().unwrap();
    }
}
