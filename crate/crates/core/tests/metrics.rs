use empathic::metrics::{distinct_n, extrema_similarity, perplexity, prediction_scores, EmbeddingTable};
use empathic::Label;
use proptest::prelude::*;
use proptest::test_runner::Config;

const CASES: u32 = 1000;

fn label(i: usize) -> Label {
    Label::from_id(i).unwrap()
}

/// Scores from an explicit confusion matrix.
struct Oracle {
    weighted_precision: f64,
    weighted_recall: f64,
    weighted_f1: f64,
    balanced_accuracy: f64,
}

#[allow(clippy::needless_range_loop)]
fn oracle_scores(preds: &[usize], golds: &[usize]) -> Oracle {
    let mut confusion = vec![vec![0usize; 41]; 41];
    for (&p, &g) in preds.iter().zip(golds) {
        confusion[g][p] += 1;
    }
    let n = golds.len() as f64;
    let (mut wp, mut wr, mut wf, mut recall_sum, mut present) = (0.0, 0.0, 0.0, 0.0, 0usize);
    for c in 0..41 {
        let support: usize = confusion[c].iter().sum();
        if support == 0 {
            continue;
        }
        let tp = confusion[c][c] as f64;
        let column: usize = (0..41).map(|g| confusion[g][c]).sum();
        let precision = if column == 0 { 0.0 } else { tp / column as f64 };
        let recall = tp / support as f64;
        let f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (column + support) as f64 };
        let w = support as f64 / n;
        wp += w * precision;
        wr += w * recall;
        wf += w * f1;
        recall_sum += recall;
        present += 1;
    }
    Oracle {
        weighted_precision: wp,
        weighted_recall: wr,
        weighted_f1: wf,
        balanced_accuracy: recall_sum / present as f64,
    }
}

fn oracle_distinct(responses: &[Vec<String>], n: usize) -> (usize, usize) {
    let mut grams: Vec<String> = Vec::new();
    for r in responses {
        if r.len() < n {
            continue;
        }
        for i in 0..=r.len() - n {
            grams.push(r[i..i + n].join("\u{1}"));
        }
    }
    let total = grams.len();
    grams.sort();
    grams.dedup();
    (grams.len(), total)
}

fn oracle_extrema(tokens: &[String], table: &[(String, Vec<f64>)], dim: usize) -> Option<Vec<f64>> {
    let vectors: Vec<&Vec<f64>> = tokens
        .iter()
        .filter_map(|t| table.iter().find(|(w, _)| w == t).map(|(_, v)| v))
        .collect();
    if vectors.is_empty() {
        return None;
    }
    Some(
        (0..dim)
            .map(|d| {
                let mut values: Vec<f64> = vectors.iter().map(|v| v[d]).collect();
                values.sort_by(|a, b| b.abs().total_cmp(&a.abs()).then(b.total_cmp(a)));
                values[0]
            })
            .collect(),
    )
}

fn oracle_similarity(cands: &[Vec<String>], refs: &[Vec<String>], table: &[(String, Vec<f64>)], dim: usize) -> f64 {
    let mut total = 0.0;
    for (c, r) in cands.iter().zip(refs) {
        if let (Some(a), Some(b)) = (oracle_extrema(c, table, dim), oracle_extrema(r, table, dim)) {
            let dot: f64 = (0..dim).map(|i| a[i] * b[i]).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na > 0.0 && nb > 0.0 {
                total += dot / (na * nb);
            }
        }
    }
    total / cands.len() as f64
}

fn arb_labels() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1..40usize, 2..41usize).prop_flat_map(|(n, classes)| {
        (prop::collection::vec(0..classes, n), prop::collection::vec(0..classes, n))
    })
}

fn arb_sentences() -> impl Strategy<Value = Vec<Vec<String>>> {
    prop::collection::vec(prop::collection::vec("[a-e]", 0..8), 0..8)
}

const WORDS: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

fn arb_table() -> impl Strategy<Value = (usize, Vec<(String, Vec<f64>)>)> {
    (1..5usize).prop_flat_map(|dim| {
        // Small integer-valued entries make magnitude ties frequent.
        let vector = prop::collection::vec((-3i32..=3).prop_map(f64::from), dim);
        (Just(dim), prop::collection::vec(vector, 5).prop_map(|vs| {
            vs.into_iter().enumerate().map(|(i, v)| (WORDS[i].to_string(), v)).collect()
        }))
    })
}

fn table_of(entries: &[(String, Vec<f64>)], dim: usize) -> EmbeddingTable {
    let mut t = EmbeddingTable::new(dim).unwrap();
    for (w, v) in entries {
        t.insert(w.clone(), v.clone()).unwrap();
    }
    t
}

fn arb_pairs() -> impl Strategy<Value = (Vec<Vec<String>>, Vec<Vec<String>>)> {
    (0..8usize).prop_flat_map(|n| {
        let sentence = prop::collection::vec("[a-f]", 0..6);
        (prop::collection::vec(sentence.clone(), n), prop::collection::vec(sentence, n))
    })
}

#[test]
fn hand_cases() {
    let r: Vec<Vec<&str>> = vec![vec!["i", "am", "sad"], vec!["i", "am", "happy"]];
    assert!((distinct_n(&r, 1).unwrap() - 4.0 / 6.0).abs() < 1e-15);
    assert_eq!(distinct_n(&r, 2).unwrap(), 0.75);
    let (a, b) = (label(33), label(36));
    let e = prediction_scores(&[a, b, b], &[a, a, b]).unwrap();
    assert!((e.balanced_accuracy - 0.75).abs() < 1e-15);
    assert!((perplexity(-(0.5f64.ln() + 0.25f64.ln()), 2) - 2.0 * 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn extrema_hand_fixture() {
    let t = EmbeddingTable::from_text("p 1 -3\nq 2 1\nr 3 4\n").unwrap();
    // Candidate extrema (2, -3), reference extrema (3, 4): (6 - 12) / (sqrt(13) * 5).
    let s = extrema_similarity(&[vec!["p", "q"]], &[vec!["r"]], &t).unwrap();
    assert!((s - (-6.0 / (13f64.sqrt() * 5.0))).abs() < 1e-12);
}

proptest! {
    #![proptest_config(Config::with_cases(CASES))]

    #[test]
    fn prediction_scores_match_confusion_oracle((preds, golds) in arb_labels()) {
        let p: Vec<Label> = preds.iter().map(|&i| label(i)).collect();
        let g: Vec<Label> = golds.iter().map(|&i| label(i)).collect();
        let got = prediction_scores(&p, &g).unwrap();
        let want = oracle_scores(&preds, &golds);
        prop_assert!((got.weighted_precision - want.weighted_precision).abs() < 1e-10);
        prop_assert!((got.weighted_recall - want.weighted_recall).abs() < 1e-10);
        prop_assert!((got.weighted_f1 - want.weighted_f1).abs() < 1e-10);
        prop_assert!((got.balanced_accuracy - want.balanced_accuracy).abs() < 1e-10);
        for s in [got.weighted_precision, got.weighted_recall, got.weighted_f1, got.balanced_accuracy] {
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn prediction_scores_ignore_relabeling((preds, golds) in arb_labels(), shift in 1..41usize) {
        let p: Vec<Label> = preds.iter().map(|&i| label(i)).collect();
        let g: Vec<Label> = golds.iter().map(|&i| label(i)).collect();
        let pp: Vec<Label> = preds.iter().map(|&i| label((i + shift) % 41)).collect();
        let gg: Vec<Label> = golds.iter().map(|&i| label((i + shift) % 41)).collect();
        let a = prediction_scores(&p, &g).unwrap();
        let b = prediction_scores(&pp, &gg).unwrap();
        prop_assert!((a.weighted_f1 - b.weighted_f1).abs() < 1e-12);
        prop_assert!((a.weighted_precision - b.weighted_precision).abs() < 1e-12);
        prop_assert!((a.balanced_accuracy - b.balanced_accuracy).abs() < 1e-12);
    }

    #[test]
    fn distinct_n_matches_enumeration(responses in arb_sentences(), n in 1..4usize) {
        let (distinct, total) = oracle_distinct(&responses, n);
        let want = if total == 0 { 0.0 } else { distinct as f64 / total as f64 };
        prop_assert_eq!(distinct_n(&responses, n).unwrap(), want);
    }

    #[test]
    fn distinct_n_ignores_response_order(mut responses in arb_sentences(), n in 1..4usize) {
        let before = distinct_n(&responses, n).unwrap();
        responses.reverse();
        prop_assert_eq!(distinct_n(&responses, n).unwrap(), before);
    }

    #[test]
    fn extrema_matches_oracle((dim, entries) in arb_table(), (cands, refs) in arb_pairs()) {
        let table = table_of(&entries, dim);
        let got = extrema_similarity(&cands, &refs, &table).unwrap();
        let want = if cands.is_empty() { 0.0 } else { oracle_similarity(&cands, &refs, &entries, dim) };
        prop_assert!((got - want).abs() < 1e-10, "{} vs {}", got, want);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&got));
    }

    #[test]
    fn extrema_ignores_token_order((dim, entries) in arb_table(), (cands, refs) in arb_pairs()) {
        let table = table_of(&entries, dim);
        let reversed: Vec<Vec<String>> = cands.iter().map(|c| c.iter().rev().cloned().collect()).collect();
        prop_assert_eq!(
            extrema_similarity(&cands, &refs, &table).unwrap(),
            extrema_similarity(&reversed, &refs, &table).unwrap()
        );
    }
}
