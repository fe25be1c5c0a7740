//! The fourteen commit-level expert features and the history index they are
//! computed against.
//!
//! | group     | features                  |
//! |-----------|---------------------------|
//! | diffusion | `ns`, `nd`, `nf`, `entropy` |
//! | size      | `la`, `ld`, `lt`            |
//! | purpose   | `fix`                       |
//! | history   | `ndev`, `age`, `nuc`        |
//! | experience| `exp`, `rexp`, `sexp`       |
//!
//! History-dependent features only ever see commits strictly earlier in
//! `(timestamp, commit_id)` order.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{CommitRecord, SplitRole};
use crate::error::{Error, Result};

pub const FEATURE_NAMES: [&str; 14] = [
    "ns", "nd", "nf", "entropy", "la", "ld", "lt", "fix", "ndev", "age", "nuc", "exp", "rexp",
    "sexp",
];
pub const N_FEATURES: usize = 14;
pub const LA: usize = 4;
pub const FIX: usize = 7;

const SECONDS_PER_DAY: f64 = 86_400.0;
const DAYS_PER_YEAR: f64 = 365.25;

const FIX_KEYWORDS: [&str; 10] = [
    "bug", "fix", "fixes", "fixed", "defect", "fault", "patch", "error", "fail", "failure",
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HandCraftedVector {
    pub ns: f64,
    pub nd: f64,
    pub nf: f64,
    pub entropy: f64,
    pub la: f64,
    pub ld: f64,
    pub lt: f64,
    pub fix: f64,
    pub ndev: f64,
    pub age: f64,
    pub nuc: f64,
    pub exp: f64,
    pub rexp: f64,
    pub sexp: f64,
}

impl HandCraftedVector {
    /// Values in [`FEATURE_NAMES`] order.
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.ns, self.nd, self.nf, self.entropy, self.la, self.ld, self.lt, self.fix,
            self.ndev, self.age, self.nuc, self.exp, self.rexp, self.sexp,
        ]
    }

    pub fn from_array(a: [f64; N_FEATURES]) -> Self {
        HandCraftedVector {
            ns: a[0],
            nd: a[1],
            nf: a[2],
            entropy: a[3],
            la: a[4],
            ld: a[5],
            lt: a[6],
            fix: a[7],
            ndev: a[8],
            age: a[9],
            nuc: a[10],
            exp: a[11],
            rexp: a[12],
            sexp: a[13],
        }
    }
}

/// Top-level directory of a path; files at the repository root belong to the
/// root subsystem `""`.
pub fn subsystem(path: &str) -> &str {
    match path.split_once('/') {
        Some((first, _)) => first,
        None => "",
    }
}

pub fn directory(path: &str) -> &str {
    match path.rfind('/') {
        Some(i) => &path[..i],
        None => "",
    }
}

/// Whole-word, case-insensitive match against the fix keyword list.
pub fn classify_fix_message(message: &str) -> bool {
    message
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .any(|w| {
            let w = w.to_lowercase();
            FIX_KEYWORDS.contains(&w.as_str())
        })
}

/// Normalized Shannon entropy of the modified-line distribution over files.
pub fn change_entropy(modified: &[usize]) -> f64 {
    let n = modified.len();
    let total: usize = modified.iter().sum();
    if n <= 1 || total == 0 {
        return 0.0;
    }
    let h: f64 = modified
        .iter()
        .filter(|&&m| m > 0)
        .map(|&m| {
            let p = m as f64 / total as f64;
            -p * p.log2()
        })
        .sum();
    (h / (n as f64).log2()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Default)]
struct PathHistory {
    last_modified: i64,
    authors: HashSet<String>,
    changes: HashSet<usize>,
}

#[derive(Debug, Clone)]
struct AuthorCommit {
    timestamp: i64,
    subsystems: BTreeSet<String>,
}

/// Incrementally maintained history of a corpus prefix.
///
/// The index holds exactly the commits passed to [`HistoryIndex::record`], in
/// order; [`HistoryIndex::extract`] refuses commits that do not come strictly
/// after the last recorded one.
#[derive(Debug, Clone, Default)]
pub struct HistoryIndex {
    paths: HashMap<String, PathHistory>,
    authors: HashMap<String, Vec<AuthorCommit>>,
    last: Option<(i64, String)>,
    recorded: usize,
}

impl HistoryIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Snapshot containing exactly `prefix`, which must be sorted.
    pub fn from_prefix(prefix: &[CommitRecord]) -> Result<Self> {
        let mut idx = Self::new();
        for c in prefix {
            idx.record(c)?;
        }
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.recorded
    }

    pub fn is_empty(&self) -> bool {
        self.recorded == 0
    }

    fn check_after(&self, commit: &CommitRecord) -> Result<()> {
        if let Some((ts, id)) = &self.last {
            if (commit.timestamp, commit.commit_id.as_str()) <= (*ts, id.as_str()) {
                return Err(Error::Unsorted(commit.commit_id.clone()));
            }
        }
        Ok(())
    }

    pub fn record(&mut self, commit: &CommitRecord) -> Result<()> {
        self.check_after(commit)?;
        let change = self.recorded;
        for f in &commit.files {
            let h = self.paths.entry(f.path.clone()).or_default();
            h.last_modified = commit.timestamp;
            h.authors.insert(commit.author.clone());
            h.changes.insert(change);
        }
        self.authors
            .entry(commit.author.clone())
            .or_default()
            .push(AuthorCommit {
                timestamp: commit.timestamp,
                subsystems: commit
                    .files
                    .iter()
                    .map(|f| subsystem(&f.path).to_string())
                    .collect(),
            });
        self.last = Some((commit.timestamp, commit.commit_id.clone()));
        self.recorded += 1;
        Ok(())
    }

    /// Features of `commit` against this snapshot.
    pub fn extract(&self, commit: &CommitRecord) -> Result<HandCraftedVector> {
        if commit.files.is_empty() {
            return Err(Error::NoFiles(commit.commit_id.clone()));
        }
        self.check_after(commit)?;

        let nf = commit.files.len();
        let subsystems: BTreeSet<&str> = commit.files.iter().map(|f| subsystem(&f.path)).collect();
        let dirs: BTreeSet<&str> = commit.files.iter().map(|f| directory(&f.path)).collect();
        let modified: Vec<usize> = commit.files.iter().map(|f| f.modified_lines()).collect();
        let la: usize = commit.files.iter().map(|f| f.added_lines.len()).sum();
        let ld: usize = commit.files.iter().map(|f| f.removed_lines.len()).sum();
        let lt = commit.files.iter().map(|f| f.loc_before as f64).sum::<f64>() / nf as f64;

        let mut devs: HashSet<&str> = HashSet::new();
        let mut changes: HashSet<usize> = HashSet::new();
        let mut age_sum = 0.0;
        for f in &commit.files {
            if let Some(h) = self.paths.get(&f.path) {
                devs.extend(h.authors.iter().map(String::as_str));
                changes.extend(h.changes.iter().copied());
                age_sum += (commit.timestamp - h.last_modified) as f64 / SECONDS_PER_DAY;
            }
        }

        let prior = self.authors.get(&commit.author).map(Vec::as_slice).unwrap_or(&[]);
        let rexp: f64 = prior
            .iter()
            .map(|p| {
                let years = (commit.timestamp - p.timestamp) as f64 / SECONDS_PER_DAY / DAYS_PER_YEAR;
                1.0 / (years + 1.0)
            })
            .sum();
        let sexp = prior
            .iter()
            .filter(|p| p.subsystems.iter().any(|s| subsystems.contains(s.as_str())))
            .count();

        Ok(HandCraftedVector {
            ns: subsystems.len() as f64,
            nd: dirs.len() as f64,
            nf: nf as f64,
            entropy: change_entropy(&modified),
            la: la as f64,
            ld: ld as f64,
            lt,
            fix: f64::from(u8::from(classify_fix_message(&commit.message))),
            ndev: devs.len() as f64,
            age: age_sum / nf as f64,
            nuc: changes.len() as f64,
            exp: prior.len() as f64,
            rexp,
            sexp: sexp as f64,
        })
    }
}

/// Single pass over a sorted corpus: each commit is featurized against the
/// history of everything before it, then recorded.
pub fn featurize_corpus(corpus: &[CommitRecord]) -> Result<Vec<HandCraftedVector>> {
    let mut idx = HistoryIndex::new();
    let mut out = Vec::with_capacity(corpus.len());
    for c in corpus {
        out.push(idx.extract(c)?);
        idx.record(c)?;
    }
    Ok(out)
}

/// Per-feature mean and population standard deviation of the 13 continuous
/// features, fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub role: SplitRole,
    /// Fingerprint of the training id set these statistics came from.
    pub fingerprint: String,
}

/// One commit's features split into the categorical part (`fix`) and the
/// z-scored continuous part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSplit {
    pub x_cat: Vec<f64>,
    pub x_cont: Vec<f64>,
}

pub const N_CAT: usize = 1;
pub const N_CONT: usize = N_FEATURES - N_CAT;

fn continuous(v: &HandCraftedVector) -> [f64; N_CONT] {
    let a = v.to_array();
    let mut out = [0.0; N_CONT];
    let mut j = 0;
    for (i, x) in a.iter().enumerate() {
        if i != FIX {
            out[j] = *x;
            j += 1;
        }
    }
    out
}

impl FeatureStats {
    pub fn fit(rows: &[HandCraftedVector], role: SplitRole, fingerprint: impl Into<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptySplit("train"));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; N_CONT];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(continuous(r)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; N_CONT];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(continuous(r)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(FeatureStats {
            mean,
            std,
            role,
            fingerprint: fingerprint.into(),
        })
    }

    /// Splits and z-scores; constant training features map to 0.
    pub fn split_and_normalize(&self, v: &HandCraftedVector) -> Result<FeatureSplit> {
        if self.role != SplitRole::Train {
            return Err(Error::Provenance(format!(
                "feature statistics were fitted on {:?} data, not training data",
                self.role
            )));
        }
        let x_cont = continuous(v)
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| if *s > 0.0 { (x - m) / s } else { 0.0 })
            .collect();
        Ok(FeatureSplit {
            x_cat: vec![v.fix],
            x_cont,
        })
    }
}

/// CSV feature table with the fixed header, values in shortest round-trip
/// decimal form.
pub fn feature_table(ids: &[&str], rows: &[HandCraftedVector], labels: &[Option<u8>]) -> String {
    let mut s = String::from("commit_id,");
    s.push_str(&FEATURE_NAMES.join(","));
    s.push_str(",label\n");
    for ((id, r), l) in ids.iter().zip(rows).zip(labels) {
        s.push_str(id);
        for x in r.to_array() {
            let _ = write!(s, ",{x}");
        }
        match l {
            Some(l) => {
                let _ = writeln!(s, ",{l}");
            }
            None => s.push_str(",\n"),
        }
    }
    s
}

pub fn write_feature_table(
    path: impl AsRef<Path>,
    corpus: &[CommitRecord],
    rows: &[HandCraftedVector],
) -> Result<()> {
    let ids: Vec<&str> = corpus.iter().map(|c| c.commit_id.as_str()).collect();
    let labels: Vec<Option<u8>> = corpus.iter().map(|c| c.label).collect();
    let path = path.as_ref();
    std::fs::write(path, feature_table(&ids, rows, &labels)).map_err(|e| Error::io(path, e))
}

/// One parsed row of a feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub commit_id: String,
    pub features: HandCraftedVector,
    pub label: Option<u8>,
}

/// Reads what [`feature_table`] writes. A leading `#` comment line is
/// skipped; a blank label reads as `None`.
pub fn parse_feature_table(text: &str) -> Result<Vec<FeatureRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#'));
    let expected = format!("commit_id,{},label", FEATURE_NAMES.join(","));
    match lines.next() {
        Some((_, h)) if h == expected => {}
        _ => return Err(Error::format("feature table", "missing or unexpected header")),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let bad = |reason: String| Error::format("feature table", format!("line {}: {reason}", i + 1));
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != N_FEATURES + 2 {
                return Err(bad(format!("{} cells", cells.len())));
            }
            let mut a = [0.0; N_FEATURES];
            for (slot, cell) in a.iter_mut().zip(&cells[1..=N_FEATURES]) {
                *slot = cell.parse().map_err(|_| bad(format!("\"{cell}\" is not a number")))?;
            }
            let label = match cells[N_FEATURES + 1] {
                "" => None,
                "0" => Some(0),
                "1" => Some(1),
                other => return Err(bad(format!("label \"{other}\""))),
            };
            Ok(FeatureRow {
                commit_id: cells[0].to_string(),
                features: HandCraftedVector::from_array(a),
                label,
            })
        })
        .collect()
}
