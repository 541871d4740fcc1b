mod common;

use common::{apply, random_rotation};
use dml_core::evaluation::{nmi, recall_at_k};
use dml_core::linalg::SeededRng;
use proptest::prelude::*;

fn dataset() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    (3usize..40, 1usize..5, 1usize..5).prop_flat_map(|(n, dim, classes)| {
        (
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), n),
            prop::collection::vec(0..classes, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recall_is_monotone_and_bounded((x, y) in dataset()) {
        let ks: Vec<usize> = (1..x.len()).collect();
        let r = recall_at_k(&x, &y, &ks).unwrap();
        let v: Vec<f64> = r.values().copied().collect();
        prop_assert!(v.iter().all(|&p| (0.0..=1.0).contains(&p)));
        prop_assert!(v.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn recall_survives_rotation((x, y) in dataset(), seed in any::<u64>()) {
        let dim = x[0].len();
        let rot = random_rotation(dim, &mut SeededRng::new(seed));
        let turned: Vec<Vec<f64>> = x.iter().map(|p| apply(&rot, p)).collect();
        let ks = [1];
        let a = recall_at_k(&x, &y, &ks).unwrap()[&1];
        let b = recall_at_k(&turned, &y, &ks).unwrap()[&1];
        // a rotation can only reorder exact ties through rounding
        prop_assert!((a - b).abs() <= 1.0 / x.len() as f64 + 1e-12);
    }

    #[test]
    fn nmi_ignores_cluster_names(labels in prop::collection::vec(0usize..4, 2..60), shift in 1usize..4) {
        let other: Vec<usize> = labels.iter().map(|&l| (l * 7 + 1) % 5).collect();
        let renamed: Vec<usize> = labels.iter().map(|&l| (l + shift) % 4).collect();
        let a = nmi(&labels, &other).unwrap();
        let b = nmi(&renamed, &other).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((nmi(&labels, &renamed).unwrap() - 1.0).abs() < 1e-12);
    }
}
