//! Tokenization, per-file change documents, vocabularies and fixed-shape
//! encoding of commits for the text models.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{CommitRecord, FileChange};
use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const ADDED: u32 = 2;
pub const REMOVED: u32 = 3;
pub const N_RESERVED: usize = 4;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const ADDED_HEADER: &str = "Added:";
pub const REMOVED_HEADER: &str = "Removed:";

const RESERVED: [&str; N_RESERVED] = [PAD_TOKEN, UNK_TOKEN, ADDED_HEADER, REMOVED_HEADER];

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Word,
    Punct,
    Space,
}

fn class_of(c: char) -> CharClass {
    if c.is_whitespace() {
        CharClass::Space
    } else if c.is_alphanumeric() || c == '_' {
        CharClass::Word
    } else {
        CharClass::Punct
    }
}

/// Lowercases and splits into word runs and punctuation runs.
///
/// ```
/// use simcom::text::tokenize;
/// assert_eq!(tokenize("Fix NPE in Parser.java"), ["fix", "npe", "in", "parser", ".", "java"]);
/// ```
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut cur_class = CharClass::Space;
    for ch in text.chars() {
        let cls = class_of(ch);
        if cls != cur_class && !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        cur_class = cls;
        if cls != CharClass::Space {
            cur.extend(ch.to_lowercase());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// `Added:` + added-line tokens + `Removed:` + removed-line tokens, with line
/// order preserved inside each group.
pub fn render_change_document(file: &FileChange) -> Vec<String> {
    let mut doc = vec![ADDED_HEADER.to_string()];
    doc.extend(tokenize(&file.added_lines.join("\n")));
    doc.push(REMOVED_HEADER.to_string());
    doc.extend(tokenize(&file.removed_lines.join("\n")));
    doc
}

/// Token documents of a commit: the message first, then one per file.
pub fn commit_documents(commit: &CommitRecord) -> Vec<Vec<String>> {
    std::iter::once(tokenize(&commit.message))
        .chain(commit.files.iter().map(render_change_document))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
    /// Fingerprint of the training split the vocabulary was counted on.
    pub fingerprint: String,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>, fingerprint: String) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab {
            tokens,
            index,
            fingerprint,
        }
    }

    /// Counts tokens over training documents and keeps the most frequent up to
    /// `max_size` entries in total (reserved ids included). Frequency ties are
    /// broken lexicographically.
    pub fn build<'a>(
        documents: impl IntoIterator<Item = &'a [String]>,
        max_size: usize,
        min_frequency: usize,
        fingerprint: impl Into<String>,
    ) -> Result<Vocab> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut any = false;
        for doc in documents {
            any = true;
            for t in doc {
                if RESERVED.contains(&t.as_str()) {
                    continue;
                }
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        if !any {
            return Err(Error::EmptyCorpus);
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_frequency.max(1))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let room = max_size.saturating_sub(N_RESERVED);
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().take(room).map(|(t, _)| t.to_string()))
            .collect();
        Ok(Self::from_tokens(tokens, fingerprint.into()))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// One token per line: the four reserved entries, then id 4 onwards.
    pub fn to_file_string(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn parse(text: &str, fingerprint: impl Into<String>) -> Result<Vocab> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < N_RESERVED || tokens[..N_RESERVED] != RESERVED {
            return Err(Error::format("vocabulary", "missing reserved preamble"));
        }
        Ok(Self::from_tokens(tokens, fingerprint.into()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, fingerprint: impl Into<String>) -> Result<Vocab> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, fingerprint)
    }
}

/// Sequence limits for encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextShape {
    pub msg_len: usize,
    pub code_len: usize,
    pub max_files: usize,
}

impl Default for TextShape {
    fn default() -> Self {
        TextShape {
            msg_len: 64,
            code_len: 256,
            max_files: 8,
        }
    }
}

impl TextShape {
    pub fn micro() -> Self {
        TextShape {
            msg_len: 16,
            code_len: 48,
            max_files: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedCommit {
    pub message: Vec<u32>,
    /// `max_files` rows of `code_len` ids; missing files are all padding.
    pub files: Vec<Vec<u32>>,
    /// Real (non-padding) file rows, at most `max_files`.
    pub n_files: usize,
}

fn fit(ids: impl Iterator<Item = u32>, len: usize) -> Vec<u32> {
    let mut v: Vec<u32> = ids.take(len).collect();
    v.resize(len, PAD);
    v
}

fn ids_of<'a>(vocab: &'a Vocab, doc: &'a [String]) -> impl Iterator<Item = u32> + 'a {
    doc.iter().map(move |t| match t.as_str() {
        ADDED_HEADER => ADDED,
        REMOVED_HEADER => REMOVED,
        _ => vocab.id(t),
    })
}

pub fn encode_commit(commit: &CommitRecord, vocab: &Vocab, shape: TextShape) -> EncodedCommit {
    let msg = tokenize(&commit.message);
    let message = fit(ids_of(vocab, &msg), shape.msg_len);
    let mut files: Vec<Vec<u32>> = commit
        .files
        .iter()
        .take(shape.max_files)
        .map(|f| {
            let doc = render_change_document(f);
            fit(ids_of(vocab, &doc), shape.code_len)
        })
        .collect();
    let n_files = files.len();
    files.resize(shape.max_files, vec![PAD; shape.code_len]);
    EncodedCommit {
        message,
        files,
        n_files,
    }
}

/// Maps ids back to tokens, stopping at the first padding id.
pub fn decode(ids: &[u32], vocab: &Vocab) -> Vec<String> {
    ids.iter()
        .take_while(|&&id| id != PAD)
        .map(|&id| vocab.token(id).unwrap_or(UNK_TOKEN).to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(v: &[&[&str]]) -> Vec<Vec<String>> {
        v.iter()
            .map(|d| d.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn tokenize_rules() {
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("a==b();"), ["a", "==", "b", "();"]);
        assert_eq!(tokenize("  snake_case  X2 "), ["snake_case", "x2"]);
    }

    #[test]
    fn change_documents() {
        let f = FileChange {
            path: "a".into(),
            added_lines: vec!["int x = 1;".into()],
            removed_lines: vec![],
            loc_before: 0,
        };
        assert_eq!(
            render_change_document(&f),
            ["Added:", "int", "x", "=", "1", ";", "Removed:"]
        );
        let g = FileChange {
            added_lines: vec![],
            removed_lines: vec!["return y;".into()],
            ..f
        };
        assert_eq!(render_change_document(&g), ["Added:", "Removed:", "return", "y", ";"]);
    }

    #[test]
    fn vocab_frequency_and_ties() {
        let mut d = vec![vec!["the".to_string(); 100]];
        d.extend(docs(&[&["alpha", "beta", "gamma", "gamma", "rare"]]));
        let v = Vocab::build(d.iter().map(Vec::as_slice), 6, 1, "fp").unwrap();
        assert_eq!(v.len(), 6);
        assert!(v.contains("the") && v.contains("gamma"));
        let w = Vocab::build(d.iter().map(Vec::as_slice), 7, 1, "fp").unwrap();
        assert!(w.contains("alpha") && !w.contains("beta"));

        let thresholded = Vocab::build(d.iter().map(Vec::as_slice), 100, 2, "fp").unwrap();
        assert_eq!(thresholded.id("rare"), UNK);
        assert!(Vocab::build(std::iter::empty::<&[String]>(), 10, 1, "fp").is_err());
    }

    #[test]
    fn encode_pads_and_truncates() {
        let d = docs(&[&["fix", "npe", "now", "x"]]);
        let v = Vocab::build(d.iter().map(Vec::as_slice), 100, 1, "fp").unwrap();
        let file = FileChange {
            path: "p".into(),
            added_lines: vec!["x".into()],
            removed_lines: vec![],
            loc_before: 1,
        };
        let c = CommitRecord {
            commit_id: "c".into(),
            timestamp: 0,
            author: "a".into(),
            message: "fix npe now".into(),
            files: vec![file; 6],
            label: None,
        };
        let shape = TextShape { msg_len: 8, code_len: 5, max_files: 4 };
        let e = encode_commit(&c, &v, shape);
        assert_eq!(&e.message[3..], &[PAD; 5]);
        assert_eq!(e.files.len(), 4);
        assert_eq!(e.n_files, 4);
        assert_eq!(e.files[0], vec![ADDED, v.id("x"), REMOVED, PAD, PAD]);
        assert_eq!(decode(&e.message, &v), ["fix", "npe", "now"]);
    }

    #[test]
    fn vocab_file_round_trip() {
        let d = docs(&[&["b", "a", "a"]]);
        let v = Vocab::build(d.iter().map(Vec::as_slice), 10, 1, "fp").unwrap();
        let text = v.to_file_string();
        assert!(text.starts_with("<pad>\n<unk>\nAdded:\nRemoved:\na\nb\n"));
        assert_eq!(Vocab::parse(&text, "fp").unwrap(), v);
        assert!(Vocab::parse("a\nb\n", "fp").is_err());
    }
}
