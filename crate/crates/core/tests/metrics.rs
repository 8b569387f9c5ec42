use nids_core::metrics::{confusion, derive_metrics, f1_score, roc_auc, roc_auc_trapezoid, roc_curve, Confusion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_set(rng: &mut ChaCha8Rng, n: usize, ties: bool) -> (Vec<f64>, Vec<bool>) {
    loop {
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        let scores = labels
            .iter()
            .map(|&l| {
                let s: f64 = rng.random::<f64>() + if l { 0.3 } else { 0.0 };
                if ties {
                    (s * 10.0).round() / 10.0
                } else {
                    s
                }
            })
            .collect();
        return (scores, labels);
    }
}

/// Literal O(n²) pair count.
fn pair_count_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

#[test]
fn rank_and_trapezoid_agree_with_pair_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in 0..100 {
        let (s, l) = random_set(&mut rng, 50 + k * 5, k % 2 == 0);
        let rank = roc_auc(&s, &l).unwrap();
        let trap = roc_auc_trapezoid(&s, &l).unwrap();
        assert!((rank - trap).abs() < 1e-9);
        assert!((rank - pair_count_auc(&s, &l)).abs() < 1e-9);
        assert!((0.0..=1.0).contains(&rank));
    }
}

#[test]
fn auc_invariant_under_increasing_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let (s, l) = random_set(&mut rng, 300, true);
        let t: Vec<f64> = s.iter().map(|x| (3.0 * x).exp() - 7.0).collect();
        assert!((roc_auc(&s, &l).unwrap() - roc_auc(&t, &l).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn negated_scores_complement_auc() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (s, l) = random_set(&mut rng, 500, false);
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        assert!((roc_auc(&s, &l).unwrap() + roc_auc(&neg, &l).unwrap() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn curve_is_monotone_from_origin_to_corner() {
    let (s, l) = random_set(&mut ChaCha8Rng::seed_from_u64(4), 200, true);
    let pts = roc_curve(&s, &l).unwrap();
    assert_eq!((pts[0].fpr, pts[0].tpr), (0.0, 0.0));
    let last = pts.last().unwrap();
    assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    for w in pts.windows(2) {
        assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr && w[1].threshold < w[0].threshold);
    }
}

#[test]
fn confusion_equals_independent_tally() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d: Vec<bool> = (0..10_000).map(|_| rng.random_bool(0.3)).collect();
    let l: Vec<bool> = (0..10_000).map(|_| rng.random_bool(0.2)).collect();
    let mut tally = [0usize; 4];
    for i in 0..d.len() {
        tally[(usize::from(d[i]) << 1) | usize::from(l[i])] += 1;
    }
    let c = confusion(&d, &l).unwrap();
    assert_eq!(c, Confusion { tn: tally[0], fn_: tally[1], fp: tally[2], tp: tally[3] });
    assert_eq!(c.total(), 10_000);
}

#[test]
fn derived_metrics_bounded_and_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let c = Confusion {
            tp: rng.random_range(0..50),
            fp: rng.random_range(0..50),
            tn: rng.random_range(0..50),
            fn_: rng.random_range(0..50),
        };
        if c.total() == 0 {
            continue;
        }
        let m = derive_metrics(&c);
        for v in [m.accuracy, m.precision, m.recall, m.f1] {
            assert!((0.0..=1.0).contains(&v));
        }
        assert_eq!(m.accuracy, (c.tp + c.tn) as f64 / c.total() as f64);
        if m.precision + m.recall > 0.0 {
            assert_eq!(m.f1, 2.0 * m.precision * m.recall / (m.precision + m.recall));
        }
    }
}

#[test]
fn f1_of_0975_and_0968_rounds_to_0971() {
    let f1 = f1_score(0.975, 0.968);
    assert!((f1 - 0.971).abs() < 5e-4, "{f1}");
}
