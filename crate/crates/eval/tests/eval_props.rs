use std::collections::BTreeSet;

use onh_eval::{
    aggregate, interpolate_tpr, kfold, read_metrics_jsonl, roc_auc, split, summarize, write_metrics_jsonl, EvalError,
    MetricRecord, Partition, SplitFractions,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("onh{i:04}")).collect()
}

/// Normalized Mann-Whitney U by exhaustive pair counting.
fn pairwise_auc(scores: &[f64], labels: &[usize]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1 && labels[j] == 0 {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

#[test]
fn auc_examples() {
    let r = roc_auc(&[0.9, 0.8, 0.3, 0.2], &[1, 1, 0, 0]).unwrap();
    assert_eq!(r.auc, 1.0);
    assert_eq!(r.curve.first().unwrap().fpr, 0.0);
    assert_eq!(r.curve.last().unwrap().tpr, 1.0);
    assert_eq!(roc_auc(&[0.4; 6], &[1, 0, 1, 0, 0, 1]).unwrap().auc, 0.5);
    assert_eq!(roc_auc(&[0.1, 0.9], &[1, 0]).unwrap().auc, 0.0);
    assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(EvalError::SingleClass)));
    assert!(matches!(roc_auc(&[f64::NAN, 0.2], &[1, 0]), Err(EvalError::NonFinite(_))));
    assert!(roc_auc(&[0.1], &[1, 0]).is_err());
}

#[test]
fn auc_matches_pair_counting_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let n = rng.random_range(2..60);
        let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        // Few distinct levels so ties are common.
        let levels = rng.random_range(1..8);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let r = roc_auc(&scores, &labels).unwrap();
        assert!((r.auc - pairwise_auc(&scores, &labels)).abs() <= 1e-12);
        assert!(r.curve.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
        assert!(r.thresholds.windows(2).all(|w| w[1] < w[0]));
    }
}

#[test]
fn interpolation_on_a_staircase() {
    let r = roc_auc(&[0.9, 0.7, 0.5, 0.3], &[1, 0, 1, 0]).unwrap();
    assert_eq!(interpolate_tpr(&r.curve, 0.0), 0.5);
    assert_eq!(interpolate_tpr(&r.curve, 0.25), 0.5);
    assert_eq!(interpolate_tpr(&r.curve, 0.5), 1.0);
    assert_eq!(interpolate_tpr(&r.curve, 1.0), 1.0);
}

#[test]
fn aggregate_examples() {
    assert_eq!(aggregate(&[0.7; 5]).unwrap(), (0.7, 0.0));
    let (m, s) = aggregate(&[0.6, 0.8]).unwrap();
    assert!((m - 0.7).abs() < 1e-15);
    assert!((s - 0.02f64.sqrt()).abs() < 1e-15);
    assert!(matches!(aggregate(&[0.7]), Err(EvalError::TooFewValues(1))));
}

#[test]
fn balanced_hundred_splits_exactly() {
    let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
    let s = split(&ids(100), &labels, SplitFractions::default(), 3).unwrap();
    assert_eq!(s.count(Partition::Train), 70);
    assert_eq!(s.count(Partition::Val), 15);
    assert_eq!(s.count(Partition::Test), 15);
    for part in [Partition::Train, Partition::Val, Partition::Test] {
        let idx = s.indices(part);
        let fragile = idx.iter().filter(|&&i| labels[i] == 1).count();
        assert!(fragile.abs_diff(idx.len() - fragile) <= 1, "{part:?} unbalanced");
    }
    assert_eq!(s, split(&ids(100), &labels, SplitFractions::default(), 3).unwrap());
    assert_ne!(s, split(&ids(100), &labels, SplitFractions::default(), 4).unwrap());
}

#[test]
fn split_errors() {
    let f = SplitFractions::default();
    assert!(matches!(
        split(&ids(6), &[0, 0, 0, 0, 1, 1], f, 0),
        Err(EvalError::ClassTooSmall { label: 1, count: 2, .. })
    ));
    let dup = vec!["a".to_string(), "a".to_string()];
    assert!(matches!(split(&dup, &[0, 1], f, 0), Err(EvalError::DuplicateId(_))));
    assert!(matches!(split(&ids(3), &[0, 1], f, 0), Err(EvalError::Length { .. })));
    let bad = SplitFractions {
        train: 0.8,
        val: 0.15,
        test: 0.15,
    };
    assert!(matches!(split(&ids(10), &[0, 1].repeat(5), bad, 0), Err(EvalError::Fractions(_))));
    assert!(matches!(
        kfold(&ids(4), &[0, 1, 0, 1], 5, f, 0),
        Err(EvalError::TooFew { n: 4, parts: 5 })
    ));
}

#[test]
fn two_hundred_sample_folds() {
    let labels: Vec<usize> = (0..200).map(|i| usize::from(i % 5 < 2)).collect();
    let folds = kfold(&ids(200), &labels, 5, SplitFractions::default(), 2024).unwrap();
    for (f, a) in folds.iter().enumerate() {
        assert_eq!(a.fold, Some(f));
        assert_eq!(a.count(Partition::Test), 40);
        assert_eq!(a.count(Partition::Val), 28);
        assert_eq!(a.count(Partition::Train), 132);
        let test_fragile = a.indices(Partition::Test).iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(test_fragile, 16);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn auc_depends_only_on_rank(
        raw in prop::collection::vec((0u8..20, 0usize..2), 2..50),
        shift in -5.0f64..5.0,
    ) {
        let mut scores: Vec<f64> = raw.iter().map(|r| r.0 as f64 / 20.0).collect();
        let mut labels: Vec<usize> = raw.iter().map(|r| r.1).collect();
        labels[0] = 0;
        labels[1] = 1;
        scores[0] = scores[0].min(1.0);
        let base = roc_auc(&scores, &labels).unwrap().auc;
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + shift).collect();
        prop_assert!((roc_auc(&warped, &labels).unwrap().auc - base).abs() <= 1e-12);
        let flipped: Vec<usize> = labels.iter().map(|l| 1 - l).collect();
        prop_assert!((roc_auc(&scores, &flipped).unwrap().auc - (1.0 - base)).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn folds_ignore_input_order(n in 15usize..80, seed in 0u64..1000, perm_seed in 0u64..1000) {
        let names = ids(n);
        let labels: Vec<usize> = (0..n).map(|i| usize::from(i % 3 == 0)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let p_names: Vec<String> = order.iter().map(|&i| names[i].clone()).collect();
        let p_labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
        let f = SplitFractions::default();
        let a = kfold(&names, &labels, 5, f, seed).unwrap();
        let b = kfold(&p_names, &p_labels, 5, f, seed).unwrap();
        let mut covered = BTreeSet::new();
        for (fa, fb) in a.iter().zip(&b) {
            for (pos, &i) in order.iter().enumerate() {
                prop_assert_eq!(fa.partitions[i], fb.partitions[pos]);
            }
            for i in fa.indices(Partition::Test) {
                prop_assert!(covered.insert(i), "sample {} tested twice", i);
            }
        }
        prop_assert_eq!(covered.len(), n);
        let sa = split(&names, &labels, f, seed).unwrap();
        let sb = split(&p_names, &p_labels, f, seed).unwrap();
        for (pos, &i) in order.iter().enumerate() {
            prop_assert_eq!(sa.partitions[i], sb.partitions[pos]);
        }
    }

    #[test]
    fn split_proportions_track_targets(n0 in 3usize..60, n1 in 3usize..60, seed in 0u64..100) {
        let labels: Vec<usize> = (0..n0 + n1).map(|i| usize::from(i >= n0)).collect();
        let s = split(&ids(n0 + n1), &labels, SplitFractions::default(), seed).unwrap();
        let n = (n0 + n1) as f64;
        for (part, frac) in [(Partition::Train, 0.70), (Partition::Val, 0.15), (Partition::Test, 0.15)] {
            prop_assert!((s.count(part) as f64 - frac * n).abs() <= 1.0);
        }
    }
}

#[test]
fn metrics_round_trip_and_summary() {
    let records: Vec<MetricRecord> = [("rf", 1, 0.8), ("dgcnn", 0, 0.9), ("rf", 0, 0.6), ("dgcnn", 1, 0.7)]
        .iter()
        .map(|&(m, f, auc)| MetricRecord {
            method: m.into(),
            fold: f,
            auc,
            curve: roc_auc(&[0.9, 0.1, 0.5], &[1, 0, 0]).unwrap().curve,
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.jsonl");
    write_metrics_jsonl(&path, &records).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with(r#"{"method":"rf","fold":1,"auc":0.8,"curve":[{"fpr":0.0,"tpr":0.0}"#));
    assert_eq!(read_metrics_jsonl(&path).unwrap(), records);
    let s = summarize(&records).unwrap();
    let keys: Vec<&str> = s.methods.keys().map(|k| k.as_str()).collect();
    assert_eq!(keys, ["dgcnn", "rf"]);
    assert!((s.methods["rf"].mean - 0.7).abs() < 1e-15);
    assert_eq!(s.methods["dgcnn"].folds, 2);
}
