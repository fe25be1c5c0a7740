//! Commit records, the line-delimited commit stream format, and the ways a
//! corpus is cut up before training: chronological splits, stratified folds,
//! majority-class undersampling and large-commit removal.
//!
//! A small synthetic generator lives in [`synth`]; it plants a metadata signal
//! and a text signal at independently controlled strengths.

pub mod synth;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub use synth::{synthesize_corpus, SynthSpec};

/// Changes made to one file by a commit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChange {
    pub path: String,
    pub added_lines: Vec<String>,
    pub removed_lines: Vec<String>,
    /// Lines in the file before the change.
    pub loc_before: u64,
}

impl FileChange {
    pub fn modified_lines(&self) -> usize {
        self.added_lines.len() + self.removed_lines.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub commit_id: String,
    /// Seconds since the epoch.
    pub timestamp: i64,
    pub author: String,
    pub message: String,
    pub files: Vec<FileChange>,
    /// 1 = defect-inducing, 0 = clean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

impl CommitRecord {
    /// Added plus removed lines over all files.
    pub fn size(&self) -> usize {
        self.files.iter().map(FileChange::modified_lines).sum()
    }

    /// Sort key used everywhere a chronological order is needed.
    pub fn order_key(&self) -> (i64, &str) {
        (self.timestamp, self.commit_id.as_str())
    }
}

/// Sorts ascending by timestamp, breaking ties by commit id.
pub fn sort_chronologically(corpus: &mut [CommitRecord]) {
    corpus.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
}

pub fn is_chronological(corpus: &[CommitRecord]) -> bool {
    corpus
        .windows(2)
        .all(|w| w[0].order_key() < w[1].order_key())
}

/// Labels of a corpus; fails on the first unlabeled commit.
pub fn labels_of(corpus: &[CommitRecord]) -> Result<Vec<u8>> {
    corpus
        .iter()
        .enumerate()
        .map(|(i, c)| {
            c.label.ok_or_else(|| schema(i + 1, "label", format!("commit \"{}\" has no label", c.commit_id)))
        })
        .collect()
}

fn schema(line: usize, field: &str, reason: impl Into<String>) -> Error {
    Error::Schema {
        line,
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn req_str(obj: &serde_json::Map<String, Value>, line: usize, field: &str) -> Result<String> {
    match obj.get(field) {
        None => Err(schema(line, field, "missing")),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(schema(line, field, "expected a string")),
    }
}

fn req_int(obj: &serde_json::Map<String, Value>, line: usize, field: &str) -> Result<i64> {
    match obj.get(field) {
        None => Err(schema(line, field, "missing")),
        Some(v) => v
            .as_i64()
            .ok_or_else(|| schema(line, field, "expected an integer")),
    }
}

fn req_lines(obj: &serde_json::Map<String, Value>, line: usize, field: &str) -> Result<Vec<String>> {
    let arr = match obj.get(field) {
        None => return Err(schema(line, field, "missing")),
        Some(Value::Array(a)) => a,
        Some(_) => return Err(schema(line, field, "expected an array of strings")),
    };
    arr.iter()
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| schema(line, field, "expected an array of strings"))
        })
        .collect()
}

/// Parses one stream line (1-based `line` for diagnostics).
pub fn parse_commit_line(text: &str, line: usize) -> Result<CommitRecord> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| schema(line, "<record>", format!("not a valid object: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| schema(line, "<record>", "expected an object"))?;

    let commit_id = req_str(obj, line, "commit_id")?;
    let timestamp = req_int(obj, line, "timestamp")?;
    let author = req_str(obj, line, "author")?;
    let message = req_str(obj, line, "message")?;

    let files_val = match obj.get("files") {
        None => return Err(schema(line, "files", "missing")),
        Some(Value::Array(a)) => a,
        Some(_) => return Err(schema(line, "files", "expected an array")),
    };
    let mut files = Vec::with_capacity(files_val.len());
    for f in files_val {
        let fo = f
            .as_object()
            .ok_or_else(|| schema(line, "files", "expected an array of objects"))?;
        let path = req_str(fo, line, "path")?;
        let added_lines = req_lines(fo, line, "added_lines")?;
        let removed_lines = req_lines(fo, line, "removed_lines")?;
        let loc_before = req_int(fo, line, "loc_before")?;
        if loc_before < 0 {
            return Err(schema(line, "loc_before", "must be non-negative"));
        }
        files.push(FileChange {
            path,
            added_lines,
            removed_lines,
            loc_before: loc_before as u64,
        });
    }

    let label = match obj.get("label") {
        None | Some(Value::Null) => None,
        Some(v) => match v.as_u64() {
            Some(0) => Some(0),
            Some(1) => Some(1),
            _ => return Err(schema(line, "label", "expected 0 or 1")),
        },
    };

    Ok(CommitRecord {
        commit_id,
        timestamp,
        author,
        message,
        files,
        label,
    })
}

/// Reads a commit stream: one JSON object per line, blank lines skipped.
pub fn load_commit_stream(path: impl AsRef<Path>) -> Result<Vec<CommitRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_commit_stream(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_commit_stream(reader: impl BufRead) -> Result<Vec<CommitRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<stream>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_commit_line(&line, i + 1)?;
        if !seen.insert(rec.commit_id.clone()) {
            return Err(Error::DuplicateCommit(rec.commit_id));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_commit_stream(path: impl AsRef<Path>, corpus: &[CommitRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for rec in corpus {
        let line = serde_json::to_string(rec).expect("commit records always serialize");
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    file.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SplitOrdering {
    Chronological,
    Fold { k: usize, index: usize },
}

/// Disjoint id sets for one experiment run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub ordering: SplitOrdering,
}

impl SplitAssignment {
    pub fn role_of(&self, id: &str) -> Option<SplitRole> {
        if self.train_ids.iter().any(|x| x == id) {
            Some(SplitRole::Train)
        } else if self.validation_ids.iter().any(|x| x == id) {
            Some(SplitRole::Validation)
        } else if self.test_ids.iter().any(|x| x == id) {
            Some(SplitRole::Test)
        } else {
            None
        }
    }

    pub fn ids(&self, role: SplitRole) -> &[String] {
        match role {
            SplitRole::Train => &self.train_ids,
            SplitRole::Validation => &self.validation_ids,
            SplitRole::Test => &self.test_ids,
        }
    }

    /// Stable fingerprint of the training id set, used to stamp anything
    /// fitted on training data (feature statistics, vocabularies).
    pub fn train_fingerprint(&self) -> String {
        crate::util::fingerprint(self.train_ids.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.75,
            validation: 0.05,
            test: 0.20,
        }
    }
}

// Guards against n * r landing a hair below an integer.
fn floor_count(n: usize, r: f64) -> usize {
    (n as f64 * r + 1e-9).floor() as usize
}

/// Chronological train/validation/test cut. Boundaries are floored; the
/// remainder goes to the test split.
pub fn chronological_split(corpus: &[CommitRecord], ratios: SplitRatios) -> Result<SplitAssignment> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let SplitRatios {
        train,
        validation,
        test,
    } = ratios;
    if !(train > 0.0 && validation > 0.0 && test > 0.0) {
        if validation <= 0.0 {
            return Err(Error::EmptySplit("validation"));
        }
        if train <= 0.0 {
            return Err(Error::EmptySplit("train"));
        }
        return Err(Error::EmptySplit("test"));
    }
    if ((train + validation + test) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios sum to {}, not 1",
            train + validation + test
        )));
    }

    let mut order: Vec<&CommitRecord> = corpus.iter().collect();
    order.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    let n = order.len();
    let n_train = floor_count(n, train);
    let n_val = floor_count(n, validation);
    if n_train == 0 {
        return Err(Error::EmptySplit("train"));
    }
    if n_val == 0 {
        return Err(Error::EmptySplit("validation"));
    }
    if n_train + n_val >= n {
        return Err(Error::EmptySplit("test"));
    }
    let ids: Vec<String> = order.iter().map(|c| c.commit_id.clone()).collect();
    Ok(SplitAssignment {
        train_ids: ids[..n_train].to_vec(),
        validation_ids: ids[n_train..n_train + n_val].to_vec(),
        test_ids: ids[n_train + n_val..].to_vec(),
        ordering: SplitOrdering::Chronological,
    })
}

/// Stratified fold assignment: returns the fold index of every position in
/// `labels`. Each class is shuffled with the seed and dealt round-robin,
/// continuing the deal where the previous class stopped.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![usize::MAX; labels.len()];
    let mut next = 0usize;
    for class in [0u8, 1u8] {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < k {
            return Err(Error::TooFewPerClass {
                class,
                count: members.len(),
                k,
            });
        }
        members.shuffle(&mut rng);
        for idx in members {
            folds[idx] = next % k;
            next += 1;
        }
    }
    if let Some(pos) = folds.iter().position(|&f| f == usize::MAX) {
        return Err(Error::InvalidArgument(format!(
            "label at position {pos} is not binary"
        )));
    }
    Ok(folds)
}

/// Share of the non-test commits held out for validation in fold mode, the
/// 5:80 validation-to-development ratio of the chronological split.
pub const FOLD_VALIDATION_SHARE: f64 = 0.0625;

/// Fold `index` of a stratified k-fold partition becomes the test split; a
/// stratified [`FOLD_VALIDATION_SHARE`] of the rest is validation. Every id
/// list keeps corpus order.
pub fn kfold_split(corpus: &[CommitRecord], k: usize, index: usize, seed: u64) -> Result<SplitAssignment> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if index >= k {
        return Err(Error::InvalidArgument(format!("fold index {index} out of range for k = {k}")));
    }
    let labels = labels_of(corpus)?;
    let folds = stratified_kfold(&labels, k, seed)?;
    let mut rng = crate::util::rng_for(seed, 1);
    let mut validation = HashSet::new();
    for class in [0u8, 1u8] {
        let mut members: Vec<usize> = (0..corpus.len())
            .filter(|&i| folds[i] != index && labels[i] == class)
            .collect();
        members.shuffle(&mut rng);
        let take = floor_count(members.len(), FOLD_VALIDATION_SHARE).max(1);
        validation.extend(members.into_iter().take(take));
    }
    let ids = |keep: &dyn Fn(usize) -> bool| -> Vec<String> {
        (0..corpus.len()).filter(|&i| keep(i)).map(|i| corpus[i].commit_id.clone()).collect()
    };
    let test_ids = ids(&|i| folds[i] == index);
    let validation_ids = ids(&|i| validation.contains(&i));
    let train_ids = ids(&|i| folds[i] != index && !validation.contains(&i));
    if train_ids.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    Ok(SplitAssignment {
        train_ids,
        validation_ids,
        test_ids,
        ordering: SplitOrdering::Fold { k, index },
    })
}

/// Randomly drops majority-class positions until both classes have the
/// minority count. Returns the kept positions in ascending order.
pub fn undersample(labels: &[u8], seed: u64) -> Result<Vec<usize>> {
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    if pos.len() + neg.len() != labels.len() {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass("undersampling needs both classes".into()));
    }
    let (minority, mut majority) = if pos.len() <= neg.len() {
        (pos, neg)
    } else {
        (neg, pos)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    majority.shuffle(&mut rng);
    majority.truncate(minority.len());
    let mut kept: Vec<usize> = minority.into_iter().chain(majority).collect();
    kept.sort_unstable();
    Ok(kept)
}

/// Removes the ⌊n·fraction⌋ largest commits (added + removed lines). Among
/// equal sizes the lexicographically larger id goes first. Survivors keep
/// their input order.
pub fn drop_large_commits(corpus: &[CommitRecord], fraction: f64) -> Result<Vec<CommitRecord>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "drop fraction must be in [0, 1), got {fraction}"
        )));
    }
    let n_drop = floor_count(corpus.len(), fraction);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.sort_by(|&a, &b| {
        corpus[b]
            .size()
            .cmp(&corpus[a].size())
            .then_with(|| corpus[b].commit_id.cmp(&corpus[a].commit_id))
    });
    let dropped: HashSet<usize> = order.into_iter().take(n_drop).collect();
    Ok(corpus
        .iter()
        .enumerate()
        .filter(|(i, _)| !dropped.contains(i))
        .map(|(_, c)| c.clone())
        .collect())
}
