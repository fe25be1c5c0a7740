#![allow(dead_code)]

pub mod checks;

use std::path::PathBuf;

use simcom::com::{ComConfig, Example};
use simcom::corpus::{load_commit_stream, synthesize_corpus, CommitRecord, SplitRole, SynthSpec};
use simcom::features::{featurize_corpus, FeatureStats, HandCraftedVector, N_FEATURES};
use simcom::fusion::Preprocessor;
use simcom::text::{commit_documents, TextShape, Vocab};
use simcom::util::fingerprint;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn history20() -> Vec<CommitRecord> {
    load_commit_stream(fixture("history20.jsonl")).unwrap()
}

/// Worked by hand from the fixture, one row per commit in feature order:
/// ns nd nf entropy la ld lt fix ndev age nuc exp rexp sexp.
pub const HISTORY20: [(&str, [f64; N_FEATURES]); 20] = [
    ("c01", [1.0, 1.0, 2.0, 1.0, 20.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
    ("c02", [1.0, 1.0, 1.0, 0.0, 20.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
    ("c03", [1.0, 1.0, 1.0, 0.0, 2.0, 1.0, 10.0, 1.0, 1.0, 2.0, 1.0, 1.0, 0.9945541184479239, 1.0]),
    ("c04", [1.0, 1.0, 1.0, 0.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
    ("c05", [2.0, 2.0, 2.0, 0.5916727785823275, 4.0, 3.0, 15.0, 1.0, 2.0, 3.5, 2.0, 1.0, 0.9918533604887985, 1.0]),
    ("c06", [1.0, 2.0, 2.0, 1.0, 12.0, 4.0, 5.5, 0.0, 1.0, 1.0, 2.0, 2.0, 1.983721349321316, 2.0]),
    ("c07", [1.0, 1.0, 2.0, 0.8112781244591328, 16.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.9918533604887985, 0.0]),
    ("c08", [1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 12.0, 1.0, 1.0, 1.0, 1.0, 3.0, 2.9595444047390256, 0.0]),
    ("c09", [1.0, 1.0, 2.0, 0.9852281360342515, 12.0, 2.0, 10.0, 0.0, 1.0, 2.5, 2.0, 2.0, 1.9650622554138533, 2.0]),
    ("c10", [3.0, 3.0, 3.0, 0.9463946303571862, 4.0, 4.0, 15.666666666666666, 1.0, 3.0, 3.3333333333333335, 8.0, 2.0, 1.9703626640500205, 1.0]),
    ("c11", [1.0, 1.0, 1.0, 0.0, 0.0, 4.0, 8.0, 0.0, 1.0, 8.0, 1.0, 4.0, 3.906604209551784, 3.0]),
    ("c12", [1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 5.0, 0.0, 1.0, 11.0, 1.0, 3.0, 2.925477906639498, 0.0]),
    ("c13", [1.0, 1.0, 1.0, 0.0, 2.0, 2.0, 4.0, 1.0, 1.0, 9.0, 1.0, 3.0, 2.9306383697519895, 2.0]),
    ("c14", [1.0, 2.0, 2.0, 0.3372900666170139, 16.0, 0.0, 6.5, 0.0, 2.0, 3.5, 4.0, 5.0, 4.8415566627846625, 4.0]),
    ("c15", [1.0, 1.0, 1.0, 0.0, 30.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
    ("c16", [2.0, 2.0, 2.0, 0.9182958340544896, 4.0, 2.0, 8.5, 1.0, 2.0, 13.5, 3.0, 4.0, 3.863188315699064, 3.0]),
    ("c17", [1.0, 1.0, 1.0, 0.0, 3.0, 3.0, 10.0, 0.0, 2.0, 11.0, 3.0, 4.0, 3.8681880397860495, 3.0]),
    ("c18", [1.0, 2.0, 3.0, 0.7559279292634755, 12.0, 2.0, 6.0, 1.0, 2.0, 5.666666666666667, 6.0, 6.0, 5.7495792033640285, 5.0]),
    ("c19", [2.0, 2.0, 2.0, 0.8112781244591328, 3.0, 1.0, 17.5, 0.0, 3.0, 9.0, 3.0, 1.0, 0.9811954331766286, 1.0]),
    ("c20", [1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 8.0, 1.0, 1.0, 10.0, 2.0, 5.0, 4.737003892547646, 4.0]),
];

/// Pairwise definition of AUC-ROC: wins plus half ties over all pairs.
pub fn roc_pairwise(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &l) in labels.iter().enumerate() {
        if l != 1 {
            continue;
        }
        for (j, &m) in labels.iter().enumerate() {
            if m != 0 {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Two-sided exact p-value by walking every sign assignment of the ranks.
pub fn wilcoxon_enumerated(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks: Vec<f64> = abs
        .iter()
        .map(|v| {
            let below = abs.iter().filter(|w| *w < v).count() as f64;
            let equal = abs.iter().filter(|w| *w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let total: f64 = ranks.iter().sum();
    let w_plus: f64 = ranks.iter().zip(&d).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
    let t = w_plus.min(total - w_plus);
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| ranks[k]).sum();
        if w.min(total - w) <= t + 1e-9 {
            hits += 1;
        }
    }
    (t, hits as f64 / (1u64 << n) as f64)
}

/// Tiny network sizes that keep finite-difference checks fast.
pub fn tiny_com() -> ComConfig {
    ComConfig {
        embed_dim: 4,
        filters: 6,
        hidden: 8,
        shape: TextShape {
            msg_len: 6,
            code_len: 8,
            max_files: 2,
        },
        vocab_size: 60,
        ..ComConfig::micro()
    }
}

pub struct MicroData {
    pub corpus: Vec<CommitRecord>,
    pub rows: Vec<HandCraftedVector>,
    pub pre: Preprocessor,
    pub examples: Vec<Example>,
}

/// The first `n` commits of a seeded synthetic corpus, preprocessed with
/// statistics and a vocabulary fitted on those same commits.
pub fn micro_data(n: usize, seed: u64, config: &ComConfig) -> MicroData {
    let spec = SynthSpec {
        size: n.max(100),
        seed,
        ..SynthSpec::default()
    };
    let mut corpus = synthesize_corpus(&spec).unwrap();
    let rows = featurize_corpus(&corpus).unwrap();
    corpus.truncate(n);
    let rows = rows[..n].to_vec();
    let fp = fingerprint(corpus.iter().map(|c| c.commit_id.as_str()));
    let stats = FeatureStats::fit(&rows, SplitRole::Train, fp.clone()).unwrap();
    let docs: Vec<Vec<String>> = corpus.iter().flat_map(commit_documents).collect();
    let vocab = Vocab::build(docs.iter().map(Vec::as_slice), config.vocab_size, 1, fp).unwrap();
    let pre = Preprocessor::new(stats, vocab, config.shape).unwrap();
    let examples = corpus
        .iter()
        .zip(&rows)
        .map(|(c, r)| pre.prepare(c, *r).unwrap().example)
        .collect();
    MicroData {
        corpus,
        rows,
        pre,
        examples,
    }
}
