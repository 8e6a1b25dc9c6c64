use itertools::Itertools;
use otlaplace::lot::{lot_distance, lot_embed};
use otlaplace::measures::{load_point_cloud_dataset, save_binary, save_json, EmpiricalMeasure, LabeledDataset, Labels};
use otlaplace::tlp::{tlp_distance, FunctionOverMeasure, Support};
use otlaplace::transport::w2_exact;
use proptest::prelude::*;

fn flat(m: usize, k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, m * k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lot_is_exact_on_translates(
        (base, shifts) in (1usize..=24, 1usize..=3, 2usize..=5).prop_flat_map(|(m, k, n)| {
            (flat(m, k).prop_map(move |c| EmpiricalMeasure::from_flat(c, k).unwrap()),
             prop::collection::vec(prop::collection::vec(-4.0f64..4.0, k), n))
        })
    ) {
        let measures: Vec<_> = shifts.iter().map(|s| base.translated(s).unwrap()).collect();
        let data = LabeledDataset::unlabeled(measures.clone()).unwrap();
        let emb = lot_embed(&measures[0], &data).unwrap();
        for i in 0..measures.len() {
            for j in 0..measures.len() {
                let lot = lot_distance(&emb, i, j).unwrap();
                let w2 = w2_exact(&measures[i], &measures[j]).unwrap().0;
                prop_assert!((lot - w2).abs() <= 1e-9 * w2.max(1.0));
            }
        }
    }

    #[test]
    fn lot_dominates_w2_and_matches_features(
        clouds in (1usize..=8, 1usize..=3, 2usize..=4).prop_flat_map(|(m, k, n)| {
            prop::collection::vec(flat(m, k).prop_map(move |c| EmpiricalMeasure::from_flat(c, k).unwrap()), n)
        })
    ) {
        let data = LabeledDataset::unlabeled(clouds.clone()).unwrap();
        let emb = lot_embed(&clouds[0], &data).unwrap();
        let features = emb.feature_matrix();
        for (i, j) in (0..clouds.len()).tuple_combinations() {
            let lot = lot_distance(&emb, i, j).unwrap();
            let w2 = w2_exact(&clouds[i], &clouds[j]).unwrap().0;
            prop_assert!(lot >= w2 - 1e-9 * w2.max(1.0));
            let euclid = features[i].iter().zip(&features[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            prop_assert!((euclid - lot).abs() <= 1e-12 * lot.max(1.0));
        }
        // distances to the reference are exact
        for i in 1..clouds.len() {
            let w2 = w2_exact(&clouds[0], &clouds[i]).unwrap().0;
            prop_assert!((lot_distance(&emb, 0, i).unwrap() - w2).abs() <= 1e-9 * w2.max(1.0));
        }
    }
}

fn function(m: usize, k: usize) -> impl Strategy<Value = FunctionOverMeasure> {
    (flat(m, k), prop::collection::vec(-2.0f64..2.0, m)).prop_map(move |(coords, values)| {
        let points: Vec<Vec<f64>> = coords.chunks(k).map(<[f64]>::to_vec).collect();
        FunctionOverMeasure::uniform(Support::euclidean(&points).unwrap(), values).unwrap()
    })
}

/// Equal uniform masses: the optimum is attained at a permutation.
fn tlp_by_permutations(a: &FunctionOverMeasure, b: &FunctionOverMeasure, p: f64) -> f64 {
    let (Support::Euclidean { coords: xa, dim }, Support::Euclidean { coords: xb, .. }) = (a.support(), b.support()) else {
        unreachable!()
    };
    let m = a.values().len();
    (0..m)
        .permutations(m)
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| {
                    let d2: f64 = (0..*dim).map(|c| (xa[i * dim + c] - xb[j * dim + c]).powi(2)).sum();
                    d2.sqrt().powf(p) + (a.values()[i] - b.values()[j]).abs().powf(p)
                })
                .sum::<f64>()
                / m as f64
        })
        .fold(f64::INFINITY, f64::min)
        .powf(1.0 / p)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tlp_metric_axioms(
        [a, b, c] in (1usize..=5, 1usize..=5, 1usize..=5, 1usize..=2).prop_flat_map(|(ma, mb, mc, k)| {
            (function(ma, k), function(mb, k), function(mc, k)).prop_map(|(a, b, c)| [a, b, c])
        }),
        p in prop::sample::select(vec![1.0, 2.0, 3.0]),
    ) {
        let ab = tlp_distance(&a, &b, p).unwrap();
        prop_assert_eq!(ab.to_bits(), tlp_distance(&b, &a, p).unwrap().to_bits());
        prop_assert!(tlp_distance(&a, &a, p).unwrap() <= 1e-9);
        let bc = tlp_distance(&b, &c, p).unwrap();
        let ac = tlp_distance(&a, &c, p).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn tlp_matches_permutations(
        (a, b) in (1usize..=5, 1usize..=2).prop_flat_map(|(m, k)| (function(m, k), function(m, k))),
        p in prop::sample::select(vec![1.0, 2.0, 3.0]),
    ) {
        let d = tlp_distance(&a, &b, p).unwrap();
        let oracle = tlp_by_permutations(&a, &b, p);
        prop_assert!((d - oracle).abs() <= 1e-9 * oracle.max(1.0));
    }

    #[test]
    fn point_measures_reduce_to_euclidean_ground((a, b) in (1usize..=4, 1usize..=2).prop_flat_map(|(m, k)| (function(m, k), function(m, k)))) {
        let lift = |f: &FunctionOverMeasure| {
            let Support::Euclidean { coords, dim } = f.support() else { unreachable!() };
            let ms = coords.chunks(*dim).map(|x| EmpiricalMeasure::from_flat(x.to_vec(), *dim).unwrap()).collect();
            FunctionOverMeasure::uniform(Support::Measures(ms), f.values().to_vec()).unwrap()
        };
        let euclid = tlp_distance(&a, &b, 2.0).unwrap();
        let lifted = tlp_distance(&lift(&a), &lift(&b), 2.0).unwrap();
        prop_assert!((euclid - lifted).abs() <= 1e-12 * euclid.max(1.0));
    }

    #[test]
    fn datasets_round_trip(
        (clouds, labels) in (1usize..=6, 1usize..=5, 1usize..=3).prop_flat_map(|(n, m, k)| {
            (prop::collection::vec(flat(m, k).prop_map(move |c| EmpiricalMeasure::from_flat(c, k).unwrap()), n),
             prop::collection::vec(prop::option::of(0usize..4), n))
        })
    ) {
        let n_classes = labels.iter().flatten().max().map_or(0, |m| m + 1);
        let data = LabeledDataset::new(clouds, Labels::new(labels, n_classes).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for (name, binary) in [("d.json", false), ("d.bin", true)] {
            let path = dir.path().join(name);
            if binary {
                save_binary(&data, &path).unwrap();
            } else {
                save_json(&data, &path).unwrap();
            }
            let back = load_point_cloud_dataset(&path).unwrap();
            prop_assert_eq!(back.measures(), data.measures());
            prop_assert_eq!(back.labels(), data.labels());
        }
    }
}
