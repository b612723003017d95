use baitpress::corpus::TruthLabel;
use baitpress::ensemble::{make_folds, train_extratrees, train_extratrees_with, ForestParams, MetaFeatures};
use baitpress::eval::roc_auc;
use baitpress::features::{extract_ngrams, Vocabulary};
use baitpress::textprep::{porter_stem, tokenize, FieldView, Preprocessor, NUMBER_TOKEN};
use baitpress::Exec;
use proptest::prelude::*;

fn is_pure_number(t: &str) -> bool {
    !t.is_empty() && t.chars().all(|c| c.is_ascii_digit() || c == ',' || c == '.') && t.chars().any(|c| c.is_ascii_digit())
}

/// Words whose stem is themselves and not a stopword, so the chain is a
/// fixed point on them.
fn stable_pool() -> Vec<&'static str> {
    let pp = Preprocessor::default();
    ["food", "snob", "cat", "dog", "market", "thing", "pictur", "celebr", "secret", "trick", "storm", "budget", "report", "vote", "[n]"]
        .into_iter()
        .filter(|w| porter_stem(w) == *w && !pp.is_stopword(w))
        .collect()
}

proptest! {
    #[test]
    fn tokens_are_clean(text in "[ -~\\u{00e9}\\u{2019}]{0,80}") {
        let pp = Preprocessor::default();
        for t in pp.process_texts(&[&text]) {
            prop_assert!(!t.is_empty());
            prop_assert!(!t.chars().any(char::is_whitespace));
            prop_assert!(t == NUMBER_TOKEN || !is_pure_number(&t), "{t}");
        }
        for t in tokenize(&text) {
            prop_assert!(!t.contains('\''));
            prop_assert!(t == NUMBER_TOKEN || !is_pure_number(&t));
        }
    }

    #[test]
    fn stopwords_never_survive_unstemmed(words in prop::collection::vec("[a-z]{1,6}", 0..20)) {
        let pp = Preprocessor::default();
        let kept = pp.remove_stopwords(words.clone());
        prop_assert!(kept.iter().all(|w| !pp.is_stopword(w)));
        let expected: Vec<String> = words.into_iter().filter(|w| !pp.is_stopword(w)).collect();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn chain_is_idempotent_on_stable_tokens(idx in prop::collection::vec(0usize..100, 0..25)) {
        let pool = stable_pool();
        let text: Vec<&str> = idx.iter().map(|&i| pool[i % pool.len()]).collect();
        let pp = Preprocessor::default();
        let once = pp.process_texts(&[text.join(" ")]);
        let twice = pp.process_texts(&[once.join(" ")]);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn judgments_give_consistent_labels(raw in prop::collection::vec(0u8..4, 1..10)) {
        let j: Vec<f64> = raw.iter().map(|&k| k as f64 / 3.0).collect();
        let l = TruthLabel::from_judgments("x", &j).unwrap();
        let lo = j.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = j.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo - 1e-12 <= l.mean && l.mean <= hi + 1e-12);
        prop_assert_eq!(l.std < 1e-12, lo == hi);
    }

    #[test]
    fn transform_sums_in_vocabulary_ngrams(
        docs in prop::collection::vec(prop::collection::vec("[a-d]", 0..8), 1..6),
        probe in prop::collection::vec("[a-e]", 0..10),
        min_df in 1usize..3,
    ) {
        let vocab = Vocabulary::fit(&docs, min_df, FieldView::PostText).unwrap();
        let v = vocab.transform(&probe);
        let expected = extract_ngrams(&probe).iter().filter(|g| vocab.get(g).is_some()).count();
        prop_assert_eq!(v.values.iter().sum::<f64>() as usize, expected);
        prop_assert!(v.indices.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(v.values.iter().all(|&x| x > 0.0));
        let mut reversed = docs.clone();
        reversed.reverse();
        prop_assert_eq!(Vocabulary::fit(&reversed, min_df, FieldView::PostText).unwrap(), vocab);
    }

    #[test]
    fn auc_invariances(
        scores in prop::collection::vec(-5.0f64..5.0, 2..40),
        flips in prop::collection::vec(any::<bool>(), 40),
    ) {
        let mut labels: Vec<f64> = scores.iter().zip(&flips).map(|(_, &f)| if f { 1.0 } else { -1.0 }).collect();
        labels[0] = 1.0;
        labels[1] = -1.0;
        let a = roc_auc(&scores, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let squashed: Vec<f64> = scores.iter().map(|s| s.exp() * 2.0 + 1.0).collect();
        prop_assert!((roc_auc(&squashed, &labels).unwrap() - a).abs() < 1e-12);
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((roc_auc(&negated, &labels).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn folds_partition_rows(n in 2usize..200, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(n >= k);
        let plan = make_folds(n, k, seed).unwrap();
        let mut seen = vec![0; n];
        for f in 0..k {
            for i in plan.test_rows(f) {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let sizes = plan.fold_sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn forest_importances_and_strategies(
        rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 6..40),
        seed in 0u64..1000,
    ) {
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let x = MetaFeatures::from_rows(names, &rows).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| r[0] * 0.5 + r[1].abs()).collect();
        let params = ForestParams { n_trees: 8, min_samples_split: 2, seed };
        let seq = train_extratrees_with(&x, &y, &params, Exec::Sequential).unwrap();
        let par = train_extratrees_with(&x, &y, &params, Exec::Parallel).unwrap();
        prop_assert_eq!(&seq, &par);
        let imp = seq.feature_importance();
        prop_assert!(imp.iter().all(|&v| v >= 0.0));
        let has_split = seq.trees.iter().any(|t| t.nodes.len() > 1);
        if has_split {
            prop_assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let pred = seq.predict(&x).unwrap();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        prop_assert!(pred.iter().all(|&p| p >= lo - 1e-12 && p <= hi + 1e-12));
    }
}

#[test]
fn constant_target_forest_is_exact() {
    let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
    let x = MetaFeatures::from_rows(vec!["a".into(), "b".into()], &rows).unwrap();
    let y = vec![0.1; 30];
    let m = train_extratrees(&x, &y, &ForestParams::default()).unwrap();
    let pred = m.predict(&x).unwrap();
    let mse: f64 = pred.iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 30.0;
    assert_eq!(mse, 0.0);
}
