//! Property tests for the structural invariants: split partitioning,
//! cache round-trips and edge augmentation bounds.

use std::collections::BTreeSet;
use std::path::PathBuf;

use proptest::prelude::*;

use graphleaf::dataset::{stratified_split, DatasetManifest, ManifestSample};
use graphleaf::model::augment_edges;
use graphleaf::rag::{read_cache, write_cache, GraphDataset, RegionGraph, SplitTag};
use graphleaf::rng::Rng;

fn manifest_from_counts(counts: &[usize]) -> DatasetManifest {
    let classes: Vec<String> = (0..counts.len()).map(|i| format!("class{}", i)).collect();
    let mut samples = Vec::new();
    for (class, &n) in counts.iter().enumerate() {
        for i in 0..n {
            samples.push(ManifestSample {
                path: PathBuf::from(format!("/x/class{}/{:04}.png", class, i)),
                class,
            });
        }
    }
    DatasetManifest {
        classes,
        samples,
        source_root: PathBuf::from("/x"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_partitions_and_stratifies(
        counts in prop::collection::vec(2usize..40, 1..5),
        fraction in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let manifest = manifest_from_counts(&counts);
        let (train, test) = stratified_split(&manifest, fraction, seed).unwrap();

        // disjoint and jointly exhaustive
        let train_set: BTreeSet<_> = train.samples.iter().map(|s| s.path.clone()).collect();
        let test_set: BTreeSet<_> = test.samples.iter().map(|s| s.path.clone()).collect();
        prop_assert!(train_set.is_disjoint(&test_set));
        prop_assert_eq!(train_set.len() + test_set.len(), manifest.samples.len());

        // per-class counts follow the fixed rounding rule
        let train_counts = train.per_class_counts();
        let test_counts = test.per_class_counts();
        for (class, &n) in counts.iter().enumerate() {
            let expected_train = (((fraction * n as f64) + 1e-9).floor() as usize).max(1);
            prop_assert_eq!(train_counts[class], expected_train);
            prop_assert_eq!(test_counts[class], n - expected_train);
            // per-class test fraction deviates from (1 - fraction) by
            // less than one sample
            let test_frac = test_counts[class] as f64 / n as f64;
            prop_assert!((test_frac - (1.0 - fraction)).abs() < 1.0 / n as f64 + 1e-9);
        }

        // determinism
        let (train2, test2) = stratified_split(&manifest, fraction, seed).unwrap();
        prop_assert_eq!(train, train2);
        prop_assert_eq!(test, test2);
    }

    #[test]
    fn cache_round_trip_is_identity(
        class_count in 1usize..5,
        graph_specs in prop::collection::vec((1usize..12, any::<u64>()), 0..8),
    ) {
        let class_names: Vec<String> = (0..class_count).map(|i| format!("class{}", i)).collect();
        let graphs: Vec<RegionGraph> = graph_specs
            .iter()
            .map(|&(n, seed)| {
                let mut rng = Rng::seed_from_u64(seed);
                let node_features = (0..n)
                    .map(|_| {
                        [
                            rng.uniform_in(-1.0, 1.0) as f32,
                            rng.uniform_in(-1.0, 1.0) as f32,
                            rng.uniform_in(-1.0, 1.0) as f32,
                        ]
                    })
                    .collect();
                let mut edges = Vec::new();
                for u in 0..n as u32 {
                    for v in (u + 1)..n as u32 {
                        if rng.uniform_f64() < 0.3 {
                            edges.push((u, v));
                        }
                    }
                }
                RegionGraph {
                    node_features,
                    edges,
                    label: rng.range(class_count as u64) as u32,
                }
            })
            .collect();
        let ds = GraphDataset {
            graphs,
            class_names,
            split_tag: SplitTag::Train,
        };

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.train.ragc");
        write_cache(&ds, &path).unwrap();
        let loaded = read_cache(&path).unwrap();
        prop_assert_eq!(ds, loaded);
    }

    #[test]
    fn augmentation_keeps_canonical_form_and_count_bound(
        n in 2usize..15,
        density in 0.0f64..1.0,
        p in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let mut rng = Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for u in 0..n as u32 {
            for v in (u + 1)..n as u32 {
                if rng.uniform_f64() < density {
                    edges.push((u, v));
                }
            }
        }
        let out = augment_edges(&edges, n, p, &mut rng);

        let delta = out.len() as i64 - edges.len() as i64;
        prop_assert!((-1..=1).contains(&delta));
        // canonical: sorted, unique, u < v, in range
        for w in out.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        for &(u, v) in &out {
            prop_assert!(u < v);
            prop_assert!((v as usize) < n);
        }
    }
}
