//! Synthetic commit histories with planted signals.
//!
//! Two channels carry label information, each switched on per defective commit
//! by an independent coin flip:
//!
//! * the metadata channel hands the commit to a first-time author, which shows
//!   up only in the experience features (`exp`, `rexp`, `sexp`);
//! * the text channel swaps a marker word into the message and a marker line
//!   into the first file's added lines, which is visible only to text models.
//!
//! Neither channel changes line counts, file counts or paths, so each signal
//! stays invisible to the other model family.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CommitRecord, FileChange};
use crate::error::{Error, Result};
use crate::util::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub size: usize,
    /// Clean commits per defective commit.
    pub imbalance_ratio: f64,
    pub feature_strength: f64,
    pub text_strength: f64,
    pub seed: u64,
    /// Lowest AUC-ROC the caller expects a model to reach on this corpus.
    /// Requesting better than chance with both strengths at zero is an error.
    pub expected_auc: Option<f64>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            size: 2000,
            imbalance_ratio: 3.0,
            feature_strength: 0.5,
            text_strength: 0.5,
            seed: 7,
            expected_auc: None,
        }
    }
}

const CORE_AUTHORS: usize = 8;
const SUBSYSTEMS: [&str; 6] = ["core", "net", "ui", "storage", "auth", "tools"];
const FILES_PER_SUBSYSTEM: usize = 10;

const WORDS: [&str; 48] = [
    "update", "add", "remove", "support", "improve", "cleanup", "move", "rename", "handle",
    "option", "config", "module", "test", "docs", "logging", "cache", "client", "server",
    "request", "response", "parser", "builder", "helper", "refactor", "simplify", "extend",
    "allow", "new", "old", "default", "value", "values", "path", "paths", "layout", "style",
    "button", "query", "index", "table", "session", "token", "user", "users", "flag", "limit",
    "timeout", "retry",
];

const IDENTS: [&str; 32] = [
    "count", "buf", "item", "node", "ctx", "state", "len", "idx", "key", "val", "res", "req",
    "conn", "cfg", "opts", "entry", "name", "size", "offset", "data", "list", "map", "out",
    "input", "handle", "reader", "writer", "cursor", "head", "tail", "span", "frame",
];

const CALLS: [&str; 12] = [
    "parse", "load", "store", "send", "recv", "flush", "push", "pop", "insert", "lookup",
    "encode", "decode",
];

const MARKER_WORDS: [&str; 2] = ["workaround", "tmphack"];
const MARKER_LINES: [&str; 2] = ["unsafe_cast ( ptr ) ;", "skip_check ( guard ) ;"];

fn code_line(rng: &mut impl Rng) -> String {
    let a = IDENTS[rng.gen_range(0..IDENTS.len())];
    let b = IDENTS[rng.gen_range(0..IDENTS.len())];
    let f = CALLS[rng.gen_range(0..CALLS.len())];
    match rng.gen_range(0..4) {
        0 => format!("let {a} = {f}({b});"),
        1 => format!("{a}.{f}({b}, {});", rng.gen_range(0..64)),
        2 => format!("if {a} > {b} {{ return {a}; }}"),
        _ => format!("{a} += {b}.len();"),
    }
}

fn message(rng: &mut impl Rng) -> Vec<String> {
    let n = rng.gen_range(4..=9);
    let mut words: Vec<String> = (0..n)
        .map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_string())
        .collect();
    // "fix" shows up independent of the label so the FIX feature is not constant.
    if rng.gen_bool(0.2) {
        words[0] = "fix".into();
    }
    words
}

/// Generates a labeled, chronologically ordered corpus. Equal specs give
/// identical corpora.
pub fn synthesize_corpus(spec: &SynthSpec) -> Result<Vec<CommitRecord>> {
    if spec.size < 100 {
        return Err(Error::InvalidArgument(format!(
            "synthetic corpus needs at least 100 commits, got {}",
            spec.size
        )));
    }
    for (name, s) in [
        ("feature_strength", spec.feature_strength),
        ("text_strength", spec.text_strength),
    ] {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidArgument(format!("{name} must be in [0, 1], got {s}")));
        }
    }
    if !(spec.imbalance_ratio > 0.0 && spec.imbalance_ratio.is_finite()) {
        return Err(Error::InvalidArgument("imbalance_ratio must be positive".into()));
    }
    if spec.feature_strength == 0.0 && spec.text_strength == 0.0 {
        if let Some(auc) = spec.expected_auc {
            if auc > 0.5 {
                return Err(Error::InvalidArgument(format!(
                    "degenerate spec: no planted signal but expected AUC {auc}"
                )));
            }
        }
    }

    let n_defect = (spec.size as f64 / (1.0 + spec.imbalance_ratio)).round() as usize;
    let n_defect = n_defect.clamp(1, spec.size - 1);
    let mut labels: Vec<u8> = (0..spec.size).map(|i| u8::from(i < n_defect)).collect();
    labels.shuffle(&mut rng_for(spec.seed, 0));

    let mut rng = rng_for(spec.seed, 1);
    let mut signal_rng = rng_for(spec.seed, 2);
    let mut loc: BTreeMap<String, u64> = BTreeMap::new();
    let mut ts: i64 = 1_500_000_000;
    let mut newcomers = 0usize;
    let mut out = Vec::with_capacity(spec.size);

    for (i, &label) in labels.iter().enumerate() {
        ts += rng.gen_range(600..(3 * 86_400));
        let (feature_hit, text_hit) = if label == 1 {
            (
                signal_rng.gen_bool(spec.feature_strength),
                signal_rng.gen_bool(spec.text_strength),
            )
        } else {
            (false, false)
        };

        let core_author = format!("dev{:02}", rng.gen_range(0..CORE_AUTHORS));
        let author = if feature_hit {
            newcomers += 1;
            format!("newcomer{newcomers:04}")
        } else {
            core_author
        };

        let mut words = message(&mut rng);
        let n_files = rng.gen_range(1..=4);
        let mut files = Vec::with_capacity(n_files);
        let mut paths = Vec::with_capacity(n_files);
        while paths.len() < n_files {
            let sub = SUBSYSTEMS[rng.gen_range(0..SUBSYSTEMS.len())];
            let p = format!("src/{sub}/file{}.rs", rng.gen_range(0..FILES_PER_SUBSYSTEM));
            if !paths.contains(&p) {
                paths.push(p);
            }
        }
        for path in paths {
            let before = *loc
                .entry(path.clone())
                .or_insert_with(|| rng.gen_range(50..400));
            let added: Vec<String> = (0..rng.gen_range(1..=10)).map(|_| code_line(&mut rng)).collect();
            let removed: Vec<String> = (0..rng.gen_range(0..=6).min(before as usize))
                .map(|_| code_line(&mut rng))
                .collect();
            loc.insert(
                path.clone(),
                before + added.len() as u64 - removed.len() as u64,
            );
            files.push(FileChange {
                path,
                added_lines: added,
                removed_lines: removed,
                loc_before: before,
            });
        }

        if text_hit {
            let w = MARKER_WORDS[signal_rng.gen_range(0..MARKER_WORDS.len())];
            let pos = signal_rng.gen_range(0..words.len());
            words[pos] = w.to_string();
            let line = MARKER_LINES[signal_rng.gen_range(0..MARKER_LINES.len())];
            let first = &mut files[0].added_lines;
            let pos = signal_rng.gen_range(0..first.len().min(3));
            first[pos] = line.to_string();
        }

        out.push(CommitRecord {
            commit_id: format!("s{i:06}"),
            timestamp: ts,
            author,
            message: words.join(" "),
            files,
            label: Some(label),
        });
    }
    Ok(out)
}
