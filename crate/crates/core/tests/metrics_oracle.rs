mod common;

use apexfas::metrics::{auc, eer_threshold, evaluate_transfer, hter, parse_scores_csv, roc_curve, ScoreSet};
use apexfas::tensor_io::Label;
use common::{pairwise_auc, rng};
use proptest::prelude::*;
use rand::Rng;

fn random_set(r: &mut impl Rng) -> ScoreSet {
    let n = r.gen_range(2..=30);
    let grid = r.gen_bool(0.5);
    let mut items: Vec<(f64, Label)> = (0..n)
        .map(|_| {
            // Coarse grids force ties.
            let s = if grid { r.gen_range(0..6) as f64 / 5.0 } else { r.gen::<f64>() };
            (s, if r.gen_bool(0.5) { Label::Live } else { Label::Spoof })
        })
        .collect();
    items[0].1 = Label::Live;
    items[1].1 = Label::Spoof;
    ScoreSet::new(items).unwrap()
}

#[test]
fn auc_matches_pairwise_oracle() {
    let mut r = rng(301);
    for _ in 0..1000 {
        let set = random_set(&mut r);
        let a = auc(&roc_curve(&set));
        assert!((a - pairwise_auc(set.items())).abs() <= 1e-12);
    }
}

/// Smallest achievable |FAR - FRR| over every real threshold.
fn brute_force_gap(set: &ScoreSet) -> f64 {
    let mut scores: Vec<f64> = set.items().iter().map(|i| i.0).collect();
    scores.sort_by(f64::total_cmp);
    scores.dedup();
    let mut probes = vec![scores[0] - 1.0, scores[scores.len() - 1] + 1.0];
    probes.extend(scores.iter().copied());
    probes.extend(scores.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    probes
        .into_iter()
        .map(|t| {
            let (far, frr) = set.error_rates(t);
            (far - frr).abs()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn eer_threshold_minimizes_rate_gap() {
    let mut r = rng(302);
    for _ in 0..1000 {
        let set = random_set(&mut r);
        let e = eer_threshold(&set);
        let (far, frr) = set.error_rates(e.threshold);
        assert_eq!((far, frr), (e.far, e.frr));
        assert!(((far - frr).abs() - brute_force_gap(&set)).abs() < 1e-15);
        assert_eq!(e.eer, (far + frr) / 2.0);
        assert_eq!(hter(&set, e.threshold), e.eer);
    }
}

#[test]
fn fixed_four_score_example() {
    let set = ScoreSet::from_classes(&[0.35, 0.8], &[0.1, 0.4]).unwrap();
    assert_eq!(auc(&roc_curve(&set)), 0.75);
    // The rates only cross on (0.35, 0.4], where both are 1/2.
    let e = eer_threshold(&set);
    assert_eq!((e.far, e.frr, e.eer), (0.5, 0.5, 0.5));
    assert_eq!(e.threshold, 0.375);
    assert_eq!(hter(&set, 0.375), 0.5);
}

#[test]
fn separable_and_inverted_sets() {
    let sep = ScoreSet::from_classes(&[0.7, 0.9], &[0.1, 0.2]).unwrap();
    assert_eq!(auc(&roc_curve(&sep)), 1.0);
    assert_eq!(eer_threshold(&sep).eer, 0.0);
    let inv = ScoreSet::from_classes(&[0.1, 0.2], &[0.7, 0.9]).unwrap();
    assert_eq!(auc(&roc_curve(&inv)), 0.0);
    let all_tied = ScoreSet::from_classes(&[0.5, 0.5], &[0.5]).unwrap();
    assert_eq!(auc(&roc_curve(&all_tied)), 0.5);
}

#[test]
fn transfer_to_identical_target_reproduces_eer() {
    let mut r = rng(303);
    for _ in 0..200 {
        let set = random_set(&mut r);
        let report = evaluate_transfer(&set, &set);
        assert_eq!(report.target_hter, report.source_eer);
        assert_eq!(report.target_auc, auc(&roc_curve(&set)));
        let text = report.to_text();
        for key in ["eer=", "threshold=", "hter=", "auc="] {
            assert!(text.lines().any(|l| l.starts_with(key)));
        }
    }
}

#[test]
fn degenerate_score_sets_are_rejected() {
    assert!(ScoreSet::new(vec![]).is_err());
    assert!(ScoreSet::from_classes(&[0.2, 0.3], &[]).is_err());
    assert!(ScoreSet::from_classes(&[f64::NAN], &[0.1]).is_err());
    assert!(parse_scores_csv("").is_err());
    assert!(parse_scores_csv("score,label\n0.3,live\n0.4,live\n").is_err());
}

proptest! {
    #[test]
    fn roc_is_monotone_from_origin_to_corner(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let set = random_set(&mut r);
        let roc = roc_curve(&set);
        let first = roc.points[0];
        let last = roc.points[roc.points.len() - 1];
        prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in roc.points.windows(2) {
            prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            prop_assert!(w[1].threshold < w[0].threshold);
        }
    }

    #[test]
    fn swapping_classes_complements_auc(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let set = random_set(&mut r);
        let swapped: Vec<(f64, Label)> = set
            .items()
            .iter()
            .map(|&(s, l)| (s, if l == Label::Live { Label::Spoof } else { Label::Live }))
            .collect();
        let a = auc(&roc_curve(&set));
        let b = auc(&roc_curve(&ScoreSet::new(swapped).unwrap()));
        prop_assert!((a + b - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn monotone_rescaling_preserves_auc(seed in 0u64..10_000, k in 0.1f64..10.0, c in -5.0f64..5.0) {
        let mut r = rng(seed);
        let set = random_set(&mut r);
        let moved: Vec<(f64, Label)> = set.items().iter().map(|&(s, l)| (k * s + c, l)).collect();
        let a = auc(&roc_curve(&set));
        let b = auc(&roc_curve(&ScoreSet::new(moved).unwrap()));
        prop_assert!((a - b).abs() <= 1e-12);
    }
}
