#![allow(clippy::needless_range_loop)]

use fosgraph_core::evaluate::{evaluate, write_report, GoldLabel, Prediction};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-class F1 and the three aggregates straight from a confusion matrix
/// (rows gold, columns predicted).
fn confusion_oracle(m: &[Vec<usize>]) -> (f64, f64, f64) {
    let c = m.len();
    let total: usize = m.iter().flatten().sum();
    let mut f1s = Vec::new();
    let mut weighted = 0.0;
    for k in 0..c {
        let tp = m[k][k] as f64;
        let predicted: usize = (0..c).map(|g| m[g][k]).sum();
        let support: usize = m[k].iter().sum();
        let p = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let r = if support == 0 { 0.0 } else { tp / support as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        f1s.push(f);
        weighted += f * support as f64 / total as f64;
    }
    let correct: usize = (0..c).map(|k| m[k][k]).sum();
    let macro_f1 = f1s.iter().sum::<f64>() / c as f64;
    (macro_f1, correct as f64 / total as f64, weighted)
}

fn from_confusion(m: &[Vec<usize>]) -> (Vec<Prediction>, Vec<GoldLabel>) {
    let (mut preds, mut gold) = (Vec::new(), Vec::new());
    for (g, row) in m.iter().enumerate() {
        for (p, &n) in row.iter().enumerate() {
            for _ in 0..n {
                let id = format!("d{}", gold.len());
                gold.push(GoldLabel {
                    id: id.clone(),
                    fos: format!("c{g}"),
                });
                preds.push(Prediction {
                    id,
                    labels: vec![format!("c{p}")],
                });
            }
        }
    }
    (preds, gold)
}

#[test]
fn hand_computed_confusion_fixture() {
    let m = vec![vec![2, 1, 0], vec![0, 2, 0], vec![1, 0, 1]];
    let (preds, gold) = from_confusion(&m);
    let got = evaluate(&preds, &gold, 1).unwrap();
    let (macro_f1, micro_f1, weighted) = confusion_oracle(&m);
    assert!((got.macro_f1 - macro_f1).abs() <= 1e-9);
    assert!((got.micro_f1 - micro_f1).abs() <= 1e-9);
    assert!((got.weighted_macro_f1 - weighted).abs() <= 1e-9);
    // class F1s 2/3, 4/5, 2/3
    assert!((got.macro_f1 - (2.0 / 3.0 + 0.8 + 2.0 / 3.0) / 3.0).abs() <= 1e-9);
    assert!((got.micro_f1 - 5.0 / 7.0).abs() <= 1e-9);
    assert!((got.weighted_macro_f1 - (3.0 * 2.0 / 3.0 + 2.0 * 0.8 + 2.0 * 2.0 / 3.0) / 7.0).abs() <= 1e-9);
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_report(&got, &mut a).unwrap();
    write_report(&got, &mut b).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with('c')).count(), 3);
}

fn ranked_sets() -> impl Strategy<Value = (Vec<Prediction>, Vec<GoldLabel>)> {
    prop::collection::vec((0u8..5, prop::collection::vec(0u8..5, 0..4)), 1..60).prop_map(|rows| {
        let mut preds = Vec::new();
        let mut gold = Vec::new();
        for (i, (g, mut ranked)) in rows.into_iter().enumerate() {
            ranked.dedup();
            gold.push(GoldLabel {
                id: format!("x{i}"),
                fos: format!("c{g}"),
            });
            preds.push(Prediction {
                id: format!("x{i}"),
                labels: ranked.into_iter().map(|r| format!("c{r}")).collect(),
            });
        }
        (preds, gold)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn top_two_never_below_top_one((preds, gold) in ranked_sets()) {
        let one = evaluate(&preds, &gold, 1).unwrap();
        let two = evaluate(&preds, &gold, 2).unwrap();
        prop_assert!(two.micro_f1 >= one.micro_f1);
        prop_assert!(two.correct >= one.correct);
    }

    #[test]
    fn aggregates_are_consistent((preds, gold) in ranked_sets(), k in 1usize..4) {
        let m = evaluate(&preds, &gold, k).unwrap();
        let weighted: f64 = m.classes.iter().map(|c| c.support as f64 / m.total as f64 * c.f1).sum();
        prop_assert!((m.weighted_macro_f1 - weighted).abs() <= 1e-9);
        let tp: usize = m.classes.iter().map(|c| c.true_positives).sum();
        let predicted: usize = m.classes.iter().map(|c| c.predicted).sum();
        prop_assert_eq!(tp, m.correct);
        let micro = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (predicted + m.total) as f64 };
        prop_assert!((m.micro_f1 - micro).abs() <= 1e-9);
        if m.unpredicted == 0 {
            prop_assert!((m.micro_f1 - m.correct as f64 / m.total as f64).abs() <= 1e-9);
        }
        for v in [m.macro_f1, m.micro_f1, m.weighted_macro_f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn permuted_gold_scores_near_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let labels: Vec<String> = (0..10_000).map(|i| format!("c{}", i % 4)).collect();
    let mut shuffled = labels.clone();
    shuffled.shuffle(&mut rng);
    let gold: Vec<GoldLabel> = labels
        .iter()
        .enumerate()
        .map(|(i, f)| GoldLabel {
            id: i.to_string(),
            fos: f.clone(),
        })
        .collect();
    let preds: Vec<Prediction> = shuffled
        .iter()
        .enumerate()
        .map(|(i, f)| Prediction {
            id: i.to_string(),
            labels: vec![f.clone()],
        })
        .collect();
    let m = evaluate(&preds, &gold, 1).unwrap();
    assert!((m.micro_f1 - 0.25).abs() <= 0.1, "{}", m.micro_f1);
    let _ = rng.random::<u8>();
}
