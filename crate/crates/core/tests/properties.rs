use std::collections::BTreeMap;

use proptest::prelude::*;

use policylens::classify::{train, ClassifierKind, ClassifierSpec, KnnModel, ModelFile};
use policylens::corpus::{segment_text, SentenceLabel};
use policylens::evaluate::{assign_folds, confusion, metrics, ConfusionMatrix};
use policylens::features::{vectorize_stems, Dataset, DatasetRow, FeatureVector, Vocabulary};
use policylens::preprocess::{stems_of, term_frequency, tokenize, StopwordList, TokenizedSentence};
use policylens::topics::{topic_distribution, topic_distribution_by_policy, TopicAssignment, TopicName};

fn label() -> impl Strategy<Value = SentenceLabel> {
    prop_oneof![Just(SentenceLabel::Sensitive), Just(SentenceLabel::NonSensitive)]
}

fn policy_text() -> impl Strategy<Value = String> {
    let piece = prop_oneof![
        "[A-Za-z]{1,8}",
        Just(" ".to_string()),
        Just(". ".to_string()),
        Just("? ".to_string()),
        Just("; ".to_string()),
        Just("\n".to_string()),
        Just("\n\n".to_string()),
        Just("\n- ".to_string()),
        Just("\n1. ".to_string()),
        Just("e.g. ".to_string()),
        Just("U.S. ".to_string()),
        Just("\"".to_string()),
        Just(")".to_string()),
        "[0-9]{1,3}",
        Just("\u{2019}".to_string()),
    ];
    prop::collection::vec(piece, 0..60).prop_map(|v| v.concat())
}

/// A small dataset over `dim` words with both labels present.
fn dataset(max_dim: usize, max_rows: usize) -> impl Strategy<Value = Dataset> {
    (1..=max_dim).prop_flat_map(move |dim| {
        prop::collection::vec((prop::collection::vec(0u32..4, dim), label()), 2..=max_rows).prop_map(
            move |mut rows| {
                rows[0].1 = SentenceLabel::Sensitive;
                rows[1].1 = SentenceLabel::NonSensitive;
                Dataset {
                    vocabulary: Vocabulary::from_stems((0..dim).map(|i| format!("w{i}")).collect(), dim)
                        .unwrap(),
                    rows: rows
                        .into_iter()
                        .enumerate()
                        .map(|(i, (counts, label))| DatasetRow {
                            features: dense(&counts),
                            label,
                            doc_id: "p".into(),
                            sentence_index: i,
                        })
                        .collect(),
                }
            },
        )
    })
}

fn dense(counts: &[u32]) -> FeatureVector {
    FeatureVector::from_pairs(
        counts.len(),
        counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i, c)),
    )
    .unwrap()
}

fn non_ws(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn segmentation_reconstructs_text(text in policy_text()) {
        let sentences = segment_text("d", &text);
        let mut prev_end = 0;
        for (i, s) in sentences.iter().enumerate() {
            prop_assert_eq!(s.index, i);
            prop_assert!(s.char_span.0 >= prev_end);
            prop_assert_eq!(&text[s.char_span.0..s.char_span.1], s.text.as_str());
            prop_assert!(!s.text.is_empty());
            prop_assert_eq!(s.text.trim(), s.text.as_str());
            prev_end = s.char_span.1;
        }
        let joined: String = sentences.iter().map(|s| s.text.as_str()).collect();
        prop_assert_eq!(non_ws(&joined), non_ws(&text));
    }

    #[test]
    fn tokens_are_lowercase_words(text in policy_text()) {
        for t in tokenize(&text) {
            prop_assert!(!t.is_empty());
            prop_assert!(t.chars().all(|c| c.is_lowercase() || c == '\''));
            prop_assert!(!t.starts_with('\'') && !t.ends_with('\''));
        }
    }

    #[test]
    fn stems_never_reproduce_stop_words(text in policy_text()) {
        let stoplist = StopwordList::default();
        for s in stems_of(&text, &stoplist) {
            prop_assert!(!stoplist.contains(&s));
            prop_assert!(!stoplist.contains_stem(&s));
        }
    }

    #[test]
    fn frequency_conserves_tokens(sentences in prop::collection::vec(prop::collection::vec("[a-e]{1,2}", 0..8), 0..12)) {
        let ts: Vec<TokenizedSentence> = sentences
            .iter()
            .enumerate()
            .map(|(i, stems)| TokenizedSentence { doc_id: "d".into(), sentence_index: i, stems: stems.clone(), label: None })
            .collect();
        let freq = term_frequency(&ts);
        let total: usize = sentences.iter().map(Vec::len).sum();
        prop_assert_eq!(freq.total(), total as u64);
        let mut expected: BTreeMap<&str, u64> = BTreeMap::new();
        for s in sentences.iter().flatten() {
            *expected.entry(s).or_default() += 1;
        }
        for (stem, n) in &expected {
            prop_assert_eq!(freq.get(stem), *n);
        }
        let ranked = freq.ranked();
        for pair in ranked.windows(2) {
            prop_assert!(pair[0].1 > pair[1].1 || (pair[0].1 == pair[1].1 && pair[0].0 < pair[1].0));
        }
    }

    #[test]
    fn vectorize_counts_only_vocabulary_stems(
        stems in prop::collection::vec("[a-f]", 0..20),
        vocab in prop::collection::btree_set("[a-f]", 0..6),
    ) {
        let vocab = Vocabulary::from_stems(vocab.into_iter().collect(), 6).unwrap();
        let v = vectorize_stems(&stems, &vocab);
        prop_assert!(v.total() <= stems.len() as u64);
        prop_assert_eq!(v.total(), stems.iter().filter(|s| vocab.contains(s)).count() as u64);
        prop_assert_eq!(v.dimension(), vocab.len());
        prop_assert_eq!(FeatureVector::parse_sparse(vocab.len(), &v.to_sparse_string()).unwrap(), v);
    }

    #[test]
    fn knn_neighbours_ignore_query_scale(data in dataset(6, 20), q in prop::collection::vec(0u32..4, 6), scale in 2u32..6) {
        let dim = data.dimension();
        let q = &q[..dim];
        let model = KnnModel::fit(&data, 1).unwrap();
        let scaled: Vec<u32> = q.iter().map(|c| c * scale).collect();
        prop_assert_eq!(model.neighbours(&dense(q)), model.neighbours(&dense(&scaled)));
    }

    #[test]
    fn knn_neighbours_are_a_prefix_of_the_ranking(data in dataset(5, 15), q in prop::collection::vec(0u32..4, 5)) {
        let q = dense(&q[..data.dimension()]);
        let all = KnnModel::fit(&data, data.len()).unwrap().neighbours(&q);
        let mut sorted = all.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..data.len()).collect::<Vec<_>>());
        for k in (1..=data.len()).step_by(2) {
            prop_assert_eq!(&KnnModel::fit(&data, k).unwrap().neighbours(&q)[..], &all[..k]);
        }
    }

    #[test]
    fn metrics_match_definitions(tp in 0u64..500, fp in 0u64..500, fn_ in 0u64..500, tn in 0u64..500) {
        let m = metrics(&ConfusionMatrix { tp, fp, fn_, tn });
        let ratio = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
        prop_assert_eq!(m.precision, ratio(tp, tp + fp));
        prop_assert_eq!(m.recall, ratio(tp, tp + fn_));
        prop_assert_eq!(m.true_negative_rate, ratio(tn, tn + fp));
        prop_assert_eq!(m.accuracy, ratio(tp + tn, tp + fp + fn_ + tn));
        if let (Some(p), Some(r), Some(f)) = (m.precision, m.recall, m.f1) {
            prop_assert!(f >= p.min(r) - 1e-12 && f <= p.max(r) + 1e-12);
        }
    }

    #[test]
    fn confusion_counts_every_pair(pairs in prop::collection::vec((label(), label()), 0..50)) {
        let (pred, truth): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let cm = confusion(&pred, &truth).unwrap();
        prop_assert_eq!(cm.total(), pairs.len() as u64);
        let tp = pairs.iter().filter(|(p, t)| p.is_sensitive() && t.is_sensitive()).count() as u64;
        prop_assert_eq!(cm.tp, tp);
    }

    #[test]
    fn folds_partition_and_stratify(labels in prop::collection::vec(label(), 10..200), folds in 2usize..10, seed in any::<u64>()) {
        prop_assume!(labels.len() >= folds);
        let a = assign_folds(&labels, folds, seed).unwrap();
        prop_assert_eq!(&a, &assign_folds(&labels, folds, seed).unwrap());
        let spread = |v: &[usize]| v.iter().max().unwrap() - v.iter().min().unwrap();
        let mut sizes = vec![0; folds];
        let mut sens = vec![0; folds];
        for (row, &f) in a.iter().enumerate() {
            sizes[f] += 1;
            if labels[row].is_sensitive() {
                sens[f] += 1;
            }
        }
        prop_assert!(spread(&sizes) <= 1);
        prop_assert!(spread(&sens) <= 1);
        let non: Vec<usize> = sizes.iter().zip(&sens).map(|(s, p)| s - p).collect();
        prop_assert!(spread(&non) <= 1);
    }

    #[test]
    fn distributions_are_fractions(topic_sets in prop::collection::vec(prop::collection::btree_set(0usize..6, 1..4), 1..30)) {
        let assignments: Vec<TopicAssignment> = topic_sets
            .iter()
            .enumerate()
            .map(|(i, set)| TopicAssignment {
                doc_id: format!("d{}", i % 4),
                sentence_index: i,
                scores: BTreeMap::new(),
                assigned: set.iter().map(|&t| TopicName::ALL[t]).collect(),
                fallback: false,
            })
            .collect();
        for dist in [topic_distribution(&assignments), topic_distribution_by_policy(&assignments)] {
            for t in TopicName::ALL {
                let f = dist.get(t);
                prop_assert!((0.0..=1.0).contains(&f));
            }
        }
        let by_sentence = topic_distribution(&assignments);
        let n = assignments.len() as f64;
        let info = assignments.iter().filter(|a| a.has(TopicName::Information)).count() as f64;
        prop_assert!((by_sentence.get(TopicName::Information) - info / n).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn training_is_deterministic(data in dataset(6, 30), kind in prop_oneof![Just(ClassifierKind::Nb), Just(ClassifierKind::Svm), Just(ClassifierKind::Knn)]) {
        let spec = match ClassifierSpec::default_for(kind) {
            ClassifierSpec::Knn { .. } => ClassifierSpec::Knn { k: 1 },
            s => s,
        };
        let a = ModelFile::new(train(&spec, &data).unwrap(), &data.vocabulary).to_json().unwrap();
        let b = ModelFile::new(train(&spec, &data).unwrap(), &data.vocabulary).to_json().unwrap();
        prop_assert_eq!(&a, &b);
        let back = ModelFile::from_json(&a).unwrap();
        prop_assert_eq!(back.to_json().unwrap(), a);
    }

    #[test]
    fn vocabulary_text_round_trips(stems in prop::collection::btree_set("[a-z]{1,6}", 1..30)) {
        let v = Vocabulary::from_stems(stems.into_iter().collect(), 30).unwrap();
        let back = Vocabulary::parse(&v.to_text()).unwrap();
        prop_assert_eq!(back.stems(), v.stems());
        prop_assert_eq!(back.hash(), v.hash());
    }
}
