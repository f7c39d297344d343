use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xaipipe::metrics::{auc, classification_report, evaluate, pearson, r2, regression_report, Metric};

/// Fraction of (positive, negative) pairs ordered correctly, ties 1/2.
fn pairwise_auc(y: &[usize], s: &[f64]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..y.len() {
        for j in 0..y.len() {
            if y[i] == 1 && y[j] == 0 {
                pairs += 1.0;
                wins += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

#[test]
fn perfect_binary_predictions() {
    let y = [0, 0, 1, 1];
    let r = classification_report(&y, &y, Some(&[0.1, 0.2, 0.8, 0.9])).unwrap();
    for m in [Metric::Accuracy, Metric::Precision, Metric::Recall, Metric::F1, Metric::Specificity, Metric::Auc] {
        assert_eq!(r.get(m), Some(1.0), "{m:?}");
    }
    let cm = r.confusion.unwrap();
    assert_eq!((cm.counts[0][0], cm.counts[1][1]), (2, 2));
    assert_eq!((cm.counts[0][1], cm.counts[1][0]), (0, 0));
}

#[test]
fn auc_trivial_cases() {
    let y = [0, 0, 1, 1];
    assert_eq!(auc(&y, &[0.1, 0.2, 0.8, 0.9]), Some(1.0));
    assert_eq!(auc(&y, &[0.9, 0.8, 0.2, 0.1]), Some(0.0));
    assert_eq!(auc(&y, &[0.5; 4]), Some(0.5));
    assert_eq!(auc(&[1, 1], &[0.2, 0.3]), None);
}

#[test]
fn auc_matches_pairwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=50);
        let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        // coarse scores force plenty of ties
        let s: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..8u8)) / 8.0).collect();
        let (a, b) = (auc(&y, &s), pairwise_auc(&y, &s));
        assert_eq!(a.is_some(), b.is_some());
        if let (Some(a), Some(b)) = (a, b) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            checked += 1;
        }
    }
    assert!(checked > 900);
}

#[test]
fn regression_identity_and_mean_predictor() {
    let y = [1.0, 2.5, -3.0, 4.0, 0.5];
    let r = regression_report(&y, &y).unwrap();
    assert_eq!(r.get(Metric::R2), Some(1.0));
    assert!((r.get(Metric::Pearson).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(r.get(Metric::Mae), Some(0.0));
    assert_eq!(r.get(Metric::Mse), Some(0.0));

    let m = y.iter().sum::<f64>() / y.len() as f64;
    assert_eq!(r2(&y, &[m; 5]), Some(0.0));
}

#[test]
fn undefined_ratios_are_flagged() {
    let r = classification_report(&[0, 0], &[0, 0], None).unwrap();
    assert_eq!(r.get(Metric::Precision), Some(0.0));
    assert!(r.is_undefined(Metric::Precision));
    assert!(r.is_undefined(Metric::Recall));
    assert!(!r.is_undefined(Metric::Accuracy));

    let c = regression_report(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
    assert!(c.is_undefined(Metric::R2));
    assert!(c.is_undefined(Metric::Pearson));
}

#[test]
fn mape_skips_zero_targets() {
    let r = regression_report(&[0.0, 2.0, 4.0], &[1.0, 1.0, 5.0]).unwrap();
    assert!((r.get(Metric::Mape).unwrap() - (0.5 + 0.25) / 2.0).abs() < 1e-15);
}

#[test]
fn bad_inputs_are_rejected() {
    assert!(classification_report(&[0, 1], &[0], None).is_err());
    assert!(classification_report(&[0, 1], &[0, 1], Some(&[0.5])).is_err());
    assert!(regression_report(&[1.0], &[1.0]).is_err());
    assert!(evaluate(Metric::Auc, &[0.0, 1.0], &[0.0, 1.0], None).is_err());
}

fn labels(max: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..40).prop_flat_map(move |n| (prop::collection::vec(0..max, n), prop::collection::vec(0..max, n)))
}

proptest! {
    #[test]
    fn auc_is_invariant_under_increasing_transforms(
        y in prop::collection::vec(0usize..2, 2..40),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<f64> = y.iter().map(|_| rng.gen_range(-3.0..3.0)).collect();
        let t: Vec<f64> = s.iter().map(|v| (2.0 * v).exp() + 7.0).collect();
        prop_assert_eq!(auc(&y, &s), auc(&y, &t));
    }

    #[test]
    fn accuracy_is_trace_over_total((y, p) in labels(3)) {
        let r = classification_report(&y, &p, None).unwrap();
        let cm = r.confusion.as_ref().unwrap();
        prop_assert_eq!(cm.total() as usize, y.len());
        prop_assert_eq!(r.get(Metric::Accuracy), Some(cm.trace() as f64 / cm.total() as f64));
    }

    #[test]
    fn swapping_labels_swaps_recall_and_specificity((y, p) in labels(2)) {
        let a = classification_report(&y, &p, None).unwrap();
        let flip = |v: &[usize]| v.iter().map(|c| 1 - c).collect::<Vec<_>>();
        let b = classification_report(&flip(&y), &flip(&p), None).unwrap();
        prop_assert_eq!(a.get(Metric::Recall), b.get(Metric::Specificity));
        prop_assert_eq!(a.get(Metric::Specificity), b.get(Metric::Recall));
        // precision of the flipped problem is the negative predictive value
        let cm = a.confusion.unwrap();
        let (tn, fn_) = (cm.counts[0][0] as f64, cm.counts[1][0] as f64);
        let npv = if tn + fn_ > 0.0 { tn / (tn + fn_) } else { 0.0 };
        prop_assert_eq!(b.get(Metric::Precision), Some(npv));
    }

    #[test]
    fn bounded_classification_metrics((y, p) in labels(2)) {
        let r = classification_report(&y, &p, None).unwrap();
        for m in [Metric::Accuracy, Metric::Precision, Metric::Recall, Metric::F1, Metric::Specificity] {
            let v = r.get(m).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn r2_never_exceeds_one(y in prop::collection::vec(-10.0f64..10.0, 2..30), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<f64> = y.iter().map(|_| rng.gen_range(-10.0..10.0)).collect();
        if let Some(v) = r2(&y, &p) {
            prop_assert!(v <= 1.0);
        }
    }

    #[test]
    fn least_squares_affine_fit_has_r2_equal_to_pearson_squared(
        y in prop::collection::vec(-10.0f64..10.0, 3..30),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = y.iter().map(|v| v + rng.gen_range(-5.0..5.0)).collect();
        let n = y.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        prop_assume!(sxx > 1e-9);
        let slope = sxy / sxx;
        let fitted: Vec<f64> = x.iter().map(|a| my + slope * (a - mx)).collect();
        if let (Some(r), Some(q)) = (pearson(&y, &fitted), r2(&y, &fitted)) {
            prop_assert!((r * r - q).abs() < 1e-9, "{} vs {}", r * r, q);
        }
    }
}
