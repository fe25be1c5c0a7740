mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use simcom::corpus::{CommitRecord, FileChange, SplitRole};
use simcom::features::{
    change_entropy, classify_fix_message, featurize_corpus, FeatureStats, HistoryIndex, N_CONT,
};
use simcom::util::rng_for;
use simcom::Error;

use common::checks::features_match_fixture;
use common::history20;

#[test]
fn fixture_matches_hand_table() {
    features_match_fixture().unwrap();
}

#[test]
fn incremental_index_agrees_with_batch() {
    let corpus = history20();
    let rows = featurize_corpus(&corpus).unwrap();
    for i in 0..corpus.len() {
        let idx = HistoryIndex::from_prefix(&corpus[..i]).unwrap();
        assert_eq!(idx.len(), i);
        assert_eq!(idx.extract(&corpus[i]).unwrap(), rows[i]);
    }
}

#[test]
fn features_ignore_the_future() {
    common::checks::features_ignore_the_future().unwrap();
}

#[test]
fn out_of_order_commits_are_refused() {
    let mut corpus = history20();
    corpus.swap(3, 4);
    assert!(matches!(featurize_corpus(&corpus), Err(Error::Unsorted(_))));
    let idx = HistoryIndex::from_prefix(&corpus[..2]).unwrap();
    assert!(idx.extract(&corpus[0]).is_err());
}

#[test]
fn entropy_boundaries() {
    common::checks::entropy_boundaries().unwrap();
    assert!((change_entropy(&[3, 1]) - 0.811_278_124_459_132_8).abs() < 1e-15);
}

#[test]
fn fix_keywords_match_whole_words() {
    for m in ["Bug in view", "fixes #12: timeout", "PATCH: ui tweak", "fail fast", "error_handling? no: error"] {
        assert!(classify_fix_message(m), "{m}");
    }
    for m in ["Prefix log lines", "debugging output", "faulty", "Refactor core", "", "prefixed-errors"] {
        assert!(!classify_fix_message(m), "{m}");
    }
}

#[test]
fn normalized_columns_are_standard() {
    let rows = featurize_corpus(&history20()).unwrap();
    let stats = FeatureStats::fit(&rows, SplitRole::Train, "fp").unwrap();
    let split: Vec<_> = rows.iter().map(|r| stats.split_and_normalize(r).unwrap()).collect();
    let n = rows.len() as f64;
    for j in 0..N_CONT {
        let col: Vec<f64> = split.iter().map(|s| s.x_cont[j]).collect();
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-12, "column {j} mean {mean}");
        if stats.std[j] > 0.0 {
            assert!((var - 1.0).abs() < 1e-12, "column {j} var {var}");
        } else {
            assert!(col.iter().all(|v| *v == 0.0));
        }
    }
    for (s, r) in split.iter().zip(&rows) {
        assert_eq!(s.x_cat, vec![r.fix]);
    }
}

#[test]
fn statistics_from_other_splits_are_refused() {
    let rows = featurize_corpus(&history20()).unwrap();
    let stats = FeatureStats::fit(&rows, SplitRole::Test, "fp").unwrap();
    assert!(matches!(stats.split_and_normalize(&rows[0]), Err(Error::Provenance(_))));
}

fn arb_file() -> impl Strategy<Value = FileChange> {
    ("[a-c]/[a-d]\\.rs|[a-c]\\.md", 0usize..6, 0usize..6, 0u64..50).prop_map(|(path, a, r, loc)| FileChange {
        added_lines: (0..a).map(|k| format!("+{k}")).collect(),
        removed_lines: (0..r).map(|k| format!("-{k}")).collect(),
        path,
        loc_before: loc,
    })
}

fn arb_corpus() -> impl Strategy<Value = Vec<CommitRecord>> {
    prop::collection::vec(
        (0i64..5, "[a-c]", "(fix|add|tidy) [a-z]{0,6}", prop::collection::vec(arb_file(), 1..4)),
        1..25,
    )
    .prop_map(|raw| {
        let mut t = 1_600_000_000;
        raw.into_iter()
            .enumerate()
            .map(|(i, (gap, author, message, mut files))| {
                t += gap * 3_600;
                files.sort_by(|a, b| a.path.cmp(&b.path));
                files.dedup_by(|a, b| a.path == b.path);
                CommitRecord {
                    commit_id: format!("k{i:03}"),
                    timestamp: t,
                    author,
                    message,
                    files,
                    label: None,
                }
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn entropy_is_a_unit_fraction(m in prop::collection::vec(0usize..100, 0..12)) {
        let h = change_entropy(&m);
        prop_assert!((0.0..=1.0).contains(&h));
    }

    #[test]
    fn entropy_ignores_file_order(mut m in prop::collection::vec(0usize..100, 2..10), seed in 0u64..100) {
        let h = change_entropy(&m);
        m.shuffle(&mut rng_for(seed, 0));
        prop_assert!((change_entropy(&m) - h).abs() < 1e-12);
    }

    #[test]
    fn features_are_finite_and_bounded(corpus in arb_corpus()) {
        let rows = featurize_corpus(&corpus).unwrap();
        for (i, (c, r)) in corpus.iter().zip(&rows).enumerate() {
            let a = r.to_array();
            prop_assert!(a.iter().all(|v| v.is_finite() && *v >= 0.0));
            prop_assert!(r.ns <= r.nd && r.nd <= r.nf);
            prop_assert_eq!(r.nf, c.files.len() as f64);
            prop_assert!(r.exp <= i as f64 && r.sexp <= r.exp && r.rexp <= r.exp + 1e-12);
            prop_assert!(r.nuc <= i as f64 && r.ndev <= 3.0);
            prop_assert!(r.fix == 0.0 || r.fix == 1.0);
        }
    }
}
