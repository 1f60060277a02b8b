use crel_core::annotation::ConversationAnnotation;
use crel_core::eval::{fleiss_kappa, items, micro_prf, spans_match, EvalOptions, Item, Matching, Mode, RatingsMatrix};
use crel_core::{EntityLink, MentionSpan, PersonalEntityLink};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn matches(g: &Item, p: &Item, m: Matching) -> bool {
    g.label == p.label && g.spans.len() == p.spans.len() && g.spans.iter().zip(&p.spans).all(|(a, b)| spans_match(a, b, m))
}

/// Maximum number of matched pairs over every injective assignment of predictions to gold.
fn brute_force_tp(gold: &[Item], pred: &[Item], m: Matching) -> usize {
    fn go(gi: usize, gold: &[Item], pred: &[Item], used: &mut Vec<bool>, m: Matching) -> usize {
        if gi == gold.len() {
            return 0;
        }
        let mut best = go(gi + 1, gold, pred, used, m);
        for pi in 0..pred.len() {
            if !used[pi] && matches(&gold[gi], &pred[pi], m) {
                used[pi] = true;
                best = best.max(1 + go(gi + 1, gold, pred, used, m));
                used[pi] = false;
            }
        }
        best
    }
    go(0, gold, pred, &mut vec![false; pred.len()], m)
}

fn random_span(rng: &mut ChaCha8Rng) -> MentionSpan {
    let t = rng.gen_range(0..2);
    let a = rng.gen_range(0..5);
    MentionSpan::explicit(t, a, a + rng.gen_range(1..3))
}

fn random_annotation(rng: &mut ChaCha8Rng, max: usize) -> ConversationAnnotation {
    let n = rng.gen_range(0..=max);
    let mut ann = ConversationAnnotation::new("c");
    for _ in 0..n {
        let span = random_span(rng);
        let entity = ["A", "B"][rng.gen_range(0..2)].to_string();
        ann.turn_mut(span.turn_index).links.push(EntityLink { span, entity_id: entity, confidence: 1.0 });
        let mut p = random_span(rng);
        p.turn_index = 2;
        p.kind = crel_core::MentionKind::Personal;
        let ante = random_span(rng);
        ann.turn_mut(2).personal.push(PersonalEntityLink { personal: p, antecedents: vec![ante], inherited_entities: vec![] });
    }
    ann
}

#[test]
fn micro_prf_equals_brute_force_max_matching() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for trial in 0..500 {
        let gold = random_annotation(&mut rng, 6);
        let pred = random_annotation(&mut rng, 6);
        for mode in [Mode::Md, Mode::El, Mode::Pel] {
            for matching in [Matching::Strong, Matching::Weak] {
                let r = micro_prf(std::slice::from_ref(&gold), std::slice::from_ref(&pred), mode, matching, &EvalOptions::default()).unwrap();
                let (g, p) = (items(&gold, mode), items(&pred, mode));
                let tp = brute_force_tp(&g, &p, matching);
                assert_eq!(r.tp, tp, "trial {trial} {mode:?} {matching:?}");
                assert_eq!(r.fp, p.len() - tp);
                assert_eq!(r.fn_, g.len() - tp);
            }
        }
    }
}

#[test]
fn swapping_gold_and_pred_swaps_precision_and_recall() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let a = random_annotation(&mut rng, 6);
        let b = random_annotation(&mut rng, 6);
        for matching in [Matching::Strong, Matching::Weak] {
            let ab = micro_prf(std::slice::from_ref(&a), std::slice::from_ref(&b), Mode::El, matching, &EvalOptions::default()).unwrap();
            let ba = micro_prf(std::slice::from_ref(&b), std::slice::from_ref(&a), Mode::El, matching, &EvalOptions::default()).unwrap();
            assert_eq!(ab.precision, ba.recall);
            assert_eq!(ab.f1, ba.f1);
            let strong = micro_prf(std::slice::from_ref(&a), std::slice::from_ref(&b), Mode::Md, Matching::Strong, &EvalOptions::default()).unwrap();
            let weak = micro_prf(std::slice::from_ref(&a), std::slice::from_ref(&b), Mode::Md, Matching::Weak, &EvalOptions::default()).unwrap();
            assert!(weak.tp >= strong.tp);
            if ab.precision + ab.recall > 0.0 {
                let h = 2.0 * ab.precision * ab.recall / (ab.precision + ab.recall);
                assert!((ab.f1 - h).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn wrong_entity_counts_as_fp_and_fn() {
    let span = |a| MentionSpan::explicit(0, a, a + 1);
    let mut gold = ConversationAnnotation::new("c");
    gold.turn_mut(0).links.push(EntityLink { span: span(0), entity_id: "X".into(), confidence: 1.0 });
    gold.turn_mut(0).links.push(EntityLink { span: span(2), entity_id: "Y".into(), confidence: 1.0 });
    let mut pred = ConversationAnnotation::new("c");
    pred.turn_mut(0).links.push(EntityLink { span: span(0), entity_id: "X".into(), confidence: 0.9 });
    pred.turn_mut(0).links.push(EntityLink { span: span(2), entity_id: "Z".into(), confidence: 0.9 });
    let r = micro_prf(&[gold], &[pred], Mode::El, Matching::Strong, &EvalOptions::default()).unwrap();
    assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 1));
    assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
}

/// Textbook Fleiss kappa for equal rater counts, written independently of the library.
fn kappa_reference(m: &[Vec<u64>]) -> f64 {
    let n = m[0].iter().sum::<u64>() as f64;
    let subjects = m.len() as f64;
    let k = m[0].len();
    let p_bar = m.iter().map(|r| (r.iter().map(|&c| (c * c) as f64).sum::<f64>() - n) / (n * (n - 1.0))).sum::<f64>() / subjects;
    let pj: Vec<f64> = (0..k).map(|j| m.iter().map(|r| r[j] as f64).sum::<f64>() / (subjects * n)).collect();
    let pe: f64 = pj.iter().map(|p| p * p).sum();
    (p_bar - pe) / (1.0 - pe)
}

#[test]
fn kappa_hand_values() {
    let perfect = RatingsMatrix::new(vec![vec![3, 0], vec![0, 3]]).unwrap();
    assert_eq!(fleiss_kappa(&perfect).unwrap(), 1.0);
    let single = RatingsMatrix::new(vec![vec![4, 0], vec![4, 0]]).unwrap();
    assert_eq!(fleiss_kappa(&single).unwrap(), 1.0);
    // P_i = (4+1-3)/6 = 1/3 each, P_bar = 1/3; p_j = 1/2, P_e = 1/2; kappa = -1/3
    let m = RatingsMatrix::new(vec![vec![2, 1], vec![1, 2]]).unwrap();
    assert!((fleiss_kappa(&m).unwrap() + 1.0 / 3.0).abs() < 1e-9);
    assert!((kappa_reference(&[vec![2, 1], vec![1, 2]]) + 1.0 / 3.0).abs() < 1e-12);
    assert!(RatingsMatrix::new(vec![vec![1, 0]]).and_then(|m| fleiss_kappa(&m)).is_err());
}

#[test]
fn kappa_matches_reference_and_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let raters = rng.gen_range(2..=6);
        let k = rng.gen_range(2..=5);
        let subjects = rng.gen_range(2..=8);
        let rows: Vec<Vec<u64>> = (0..subjects)
            .map(|_| {
                let mut r = vec![0u64; k];
                for _ in 0..raters {
                    r[rng.gen_range(0..k)] += 1;
                }
                r
            })
            .collect();
        let base = fleiss_kappa(&RatingsMatrix::new(rows.clone()).unwrap()).unwrap();
        let reference = kappa_reference(&rows);
        if reference.is_finite() {
            assert!((base - reference).abs() < 1e-9, "{rows:?}");
        }
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let mut shuffled: Vec<Vec<u64>> = rows.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect();
        shuffled.shuffle(&mut rng);
        let permuted = fleiss_kappa(&RatingsMatrix::new(shuffled).unwrap()).unwrap();
        assert!((base - permuted).abs() < 1e-9);
    }
}
