use cpac_core::data::{fit_normalizer, stratified_split};
use cpac_core::metrics::auc_roc;
use cpac_core::nn::Checkpoint;
use cpac_core::smote::{generate, SmoteConfig};
use cpac_core::{
    ClassLoss, CpacConfig, CpacParams, Dataset, Matrix, MlpHead, MlpVariant, VaeGan, VaeGanConfig,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-5.0f64..5.0, rows * cols).prop_map(move |v| Matrix::new(rows, cols, v).unwrap())
}

fn labelled(n0: usize, n1: usize) -> Dataset {
    let mut labels = vec![0u8; n0];
    labels.extend(std::iter::repeat_n(1u8, n1));
    let x = Matrix::new(n0 + n1, 1, (0..n0 + n1).map(|i| i as f64).collect()).unwrap();
    Dataset::new(x, labels, vec!["f".into()]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_a_stratified_partition(n0 in 2usize..400, n1 in 2usize..40, ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let ds = labelled(n0, n1);
        let s = stratified_split(&ds, ratio, seed).unwrap();
        let mut all: Vec<usize> = s.train_idx.iter().chain(&s.val_idx).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n0 + n1).collect::<Vec<_>>());
        let total = ((n0 + n1) as f64 * ratio + 1e-9).floor() as usize;
        prop_assert_eq!(s.train_idx.len(), total);
        let minority = n0.min(n1);
        let minority_label = u8::from(n1 <= n0);
        let minority_train = s.train_idx.iter().filter(|&&i| ds.labels[i] == minority_label).count();
        prop_assert_eq!(minority_train, (minority as f64 * ratio + 1e-9).floor() as usize);
        prop_assert_eq!(stratified_split(&ds, ratio, seed).unwrap(), s);
    }

    #[test]
    fn smote_rows_stay_in_the_bounding_box(x in matrix(12, 3), n in 0usize..200, seed in any::<u64>()) {
        let s = generate(&x, &SmoteConfig { n_samples: n, seed, ..Default::default() }).unwrap();
        prop_assert_eq!(s.shape(), (n, 3));
        for c in 0..3 {
            let col = x.col_values(c);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for v in s.col_values(c) {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn auc_is_bounded_and_flips_under_negation(scores in prop::collection::vec(-1.0f64..1.0, 30), mask in prop::collection::vec(any::<bool>(), 30)) {
        let mut labels: Vec<u8> = mask.iter().map(|&b| u8::from(b)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let a = auc_roc(&labels, &scores).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let neg: Vec<f64> = scores.iter().map(|v| -v).collect();
        prop_assert!((a + auc_roc(&labels, &neg).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_does_not_change_the_decision(x in matrix(20, 4), seed in any::<u64>(), alpha in 1e-3f64..50.0) {
        let mut p = CpacParams::new(CpacConfig::new(4), &mut ChaCha8Rng::seed_from_u64(seed));
        let before: Vec<bool> = p.predict(&x).unwrap().iter().map(|&v| v > 0.5).collect();
        let d_before = p.distances(&x).unwrap();
        p.alpha[0] = alpha;
        let d_after = p.distances(&x).unwrap();
        for (i, &b) in before.iter().enumerate() {
            let margin = d_before.0[i] - d_before.1[i];
            if margin.abs() > 1e-9 {
                prop_assert_eq!(d_after.0[i] > d_after.1[i], b);
            }
        }
    }

    #[test]
    fn anchor_gradient_pulls_prototypes_towards_class_means(x in matrix(30, 3), seed in any::<u64>()) {
        let y: Vec<f64> = (0..30).map(|i| f64::from(u8::from(i % 4 == 0))).collect();
        let mut cfg = CpacConfig::new(3);
        cfg.lambda_anchor = 1.0;
        let mut p = CpacParams::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let before = p.anchor_penalty(&x, &y).unwrap();
        // One gradient step on the anchor term alone.
        let mean1: Vec<f64> = {
            let idx: Vec<usize> = (0..30).filter(|&i| y[i] == 1.0).collect();
            x.select_rows(&idx).column_means()
        };
        let mean0: Vec<f64> = {
            let idx: Vec<usize> = (0..30).filter(|&i| y[i] == 0.0).collect();
            x.select_rows(&idx).column_means()
        };
        for (proto, m) in [(&mut p.p0, &mean0), (&mut p.p1, &mean1)] {
            for (v, t) in proto.iter_mut().zip(m.iter()) {
                *v -= 0.1 * 2.0 * (*v - t);
            }
        }
        prop_assert!(p.anchor_penalty(&x, &y).unwrap() <= before + 1e-12);
    }

    #[test]
    fn normalizer_round_trips(x in matrix(25, 4)) {
        let p = fit_normalizer(&x).unwrap();
        let back = p.invert(&p.apply(&x).unwrap()).unwrap();
        for (a, b) in x.as_slice().iter().zip(back.as_slice()) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn mlp_outputs_are_probabilities(x in matrix(16, 5), variant in 1u8..=3, seed in any::<u64>()) {
        let head = MlpHead::new(MlpVariant::from_index(variant).unwrap(), 5, seed);
        for p in head.predict(&x).unwrap() {
            prop_assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn cpac_outputs_are_probabilities(x in matrix(16, 5), seed in any::<u64>()) {
        let p = CpacParams::new(CpacConfig::new(5), &mut ChaCha8Rng::seed_from_u64(seed));
        for v in p.predict(&x).unwrap() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let y = vec![0.0; 16];
        prop_assert!(p.total_loss(&x, &y, &ClassLoss::Bce).unwrap().total.is_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn checkpoints_round_trip_exactly(seed in any::<u64>(), x in matrix(6, 30)) {
        let p = CpacParams::new(CpacConfig::new(2), &mut ChaCha8Rng::seed_from_u64(seed));
        let restored = CpacParams::from_checkpoint(&Checkpoint::from_json(&p.to_checkpoint().unwrap().to_json().unwrap()).unwrap()).unwrap();
        let z = Matrix::new(3, 2, vec![0.1, -0.2, 1.0, 2.0, -3.0, 0.5]).unwrap();
        prop_assert_eq!(p.predict(&z).unwrap(), restored.predict(&z).unwrap());

        let vg = VaeGan::new(VaeGanConfig { seed, ..VaeGanConfig::new(30) }).unwrap();
        let text = vg.to_checkpoint().unwrap().to_json().unwrap();
        let back = VaeGan::from_checkpoint(&Checkpoint::from_json(&text).unwrap()).unwrap();
        prop_assert_eq!(vg.means(&x).unwrap(), back.means(&x).unwrap());
        prop_assert_eq!(vg.reconstruction_error(&x).unwrap(), back.reconstruction_error(&x).unwrap());
    }
}
