//! Classification metrics against brute-force tallies.

use hivesig::evalmetrics::{confusion_matrix, report, ConfusionMatrix, MetricsError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Tally {
    counts: Vec<Vec<u64>>,
    precision: Vec<f64>,
    recall: Vec<f64>,
    f1: Vec<f64>,
    support: Vec<u64>,
    accuracy: f64,
}

fn brute_force(preds: &[usize], labels: &[usize], k: usize) -> Tally {
    let count = |f: &dyn Fn(usize, usize) -> bool| preds.iter().zip(labels).filter(|(&p, &t)| f(p, t)).count() as u64;
    let counts = (0..k).map(|t| (0..k).map(|p| count(&|pp, tt| pp == p && tt == t)).collect()).collect();
    let mut precision = Vec::new();
    let mut recall = Vec::new();
    let mut f1 = Vec::new();
    let mut support = Vec::new();
    for c in 0..k {
        let tp = count(&|p, t| p == c && t == c) as f64;
        let fp = count(&|p, t| p == c && t != c) as f64;
        let fn_ = count(&|p, t| p != c && t == c) as f64;
        let pr = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let rc = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        precision.push(pr);
        recall.push(rc);
        f1.push(if pr + rc > 0.0 { 2.0 * pr * rc / (pr + rc) } else { 0.0 });
        support.push((tp + fn_) as u64);
    }
    let accuracy = count(&|p, t| p == t) as f64 / preds.len() as f64;
    Tally { counts, precision, recall, f1, support, accuracy }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

#[test]
fn report_matches_brute_force_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for case in 0..1000 {
        let k = rng.gen_range(2..=8);
        let n = rng.gen_range(1..=300);
        // skewed toward correct predictions, with some classes possibly absent
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let preds: Vec<usize> =
            labels.iter().map(|&t| if rng.gen_bool(0.6) { t } else { rng.gen_range(0..k) }).collect();
        let cm = confusion_matrix(&preds, &labels, k).unwrap();
        let r = report(&cm).unwrap();
        let o = brute_force(&preds, &labels, k);

        assert_eq!(cm.counts, o.counts, "case {case}");
        assert_eq!(r.total, n as u64);
        assert!(close(r.accuracy, o.accuracy));
        for c in 0..k {
            let m = &r.classes[c];
            assert_eq!(m.support, o.support[c]);
            assert!(close(m.precision, o.precision[c]), "case {case} class {c} precision");
            assert!(close(m.recall, o.recall[c]), "case {case} class {c} recall");
            assert!(close(m.f1, o.f1[c]), "case {case} class {c} f1 {} vs {}", m.f1, o.f1[c]);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / k as f64;
        let weighted = |v: &[f64]| v.iter().zip(&o.support).map(|(x, &s)| x * s as f64).sum::<f64>() / n as f64;
        assert!(close(r.macro_avg.precision, mean(&o.precision)));
        assert!(close(r.macro_avg.recall, mean(&o.recall)));
        assert!(close(r.macro_avg.f1, mean(&o.f1)));
        assert!(close(r.weighted_avg.precision, weighted(&o.precision)));
        assert!(close(r.weighted_avg.recall, weighted(&o.recall)));
        assert!(close(r.weighted_avg.f1, weighted(&o.f1)));
    }
}

#[test]
fn relabeling_classes_permutes_the_report() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let k = rng.gen_range(2..=6);
        let labels: Vec<usize> = (0..200).map(|_| rng.gen_range(0..k)).collect();
        let preds: Vec<usize> = (0..200).map(|_| rng.gen_range(0..k)).collect();
        let mut perm: Vec<usize> = (0..k).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let map = |v: &[usize]| v.iter().map(|&c| perm[c]).collect::<Vec<_>>();
        let a = report(&confusion_matrix(&preds, &labels, k).unwrap()).unwrap();
        let b = report(&confusion_matrix(&map(&preds), &map(&labels), k).unwrap()).unwrap();
        assert_eq!(a.accuracy, b.accuracy);
        for c in 0..k {
            assert_eq!(a.classes[c].f1, b.classes[perm[c]].f1);
            assert_eq!(a.classes[c].support, b.classes[perm[c]].support);
        }
        assert!(close(a.macro_avg.f1, b.macro_avg.f1));
        assert!(close(a.weighted_avg.f1, b.weighted_avg.f1));
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(matches!(confusion_matrix(&[0, 1], &[0], 2), Err(MetricsError::LengthMismatch { .. })));
    assert!(matches!(confusion_matrix(&[0, 3], &[0, 1], 2), Err(MetricsError::OutOfRangeClass { id: 3, k: 2 })));
    assert!(matches!(report(&ConfusionMatrix::from_counts(vec![vec![0; 3]; 3])), Err(MetricsError::EmptyMatrix)));
}

/// A 2,368-sample, four-class confusion matrix whose two-decimal report is
/// precision .98/.99/.97/.99, recall .99/.97/.97/1.00, F1 .99/.98/.97/.99,
/// accuracy .98 with supports 549/627/583/609.
#[test]
fn published_test_report_is_reproduced() {
    let cm = ConfusionMatrix::from_counts(vec![
        vec![542, 3, 4, 0],
        vec![3, 608, 13, 3],
        vec![6, 5, 568, 4],
        vec![0, 1, 2, 606],
    ]);
    let r = report(&cm).unwrap();
    let round2 = |v: f64| (v * 100.0).round() / 100.0;
    let col = |f: fn(&hivesig::evalmetrics::ClassMetrics) -> f64| r.classes.iter().map(|c| round2(f(c))).collect::<Vec<_>>();
    assert_eq!(col(|c| c.precision), vec![0.98, 0.99, 0.97, 0.99]);
    assert_eq!(col(|c| c.recall), vec![0.99, 0.97, 0.97, 1.00]);
    assert_eq!(col(|c| c.f1), vec![0.99, 0.98, 0.97, 0.99]);
    assert_eq!(r.classes.iter().map(|c| c.support).collect::<Vec<_>>(), vec![549, 627, 583, 609]);
    assert_eq!(round2(r.accuracy), 0.98);
    assert_eq!(r.total, 2368);
}
