//! End-to-end experiment runs: featurize, split, train Sim, Com and the
//! early-fused models, sweep the fusion combinations on validation data,
//! then evaluate everything on the test split.
//!
//! Each run directory holds a stage-ordered `provenance.log`. Test labels
//! are read only by the `evaluate` stage and the analyses after it.

mod config;
mod report;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::com::{grid_search, train_com, train_early_fused, ComConfig, DeepModel, Example, TrainLog};
use crate::corpus::{
    chronological_split, drop_large_commits, kfold_split, labels_of, load_commit_stream, sort_chronologically,
    synthesize_corpus, write_commit_stream, CommitRecord, SplitAssignment, SplitRole,
};
use crate::error::{Error, Result};
use crate::eval::MetricReport;
use crate::features::{feature_table, featurize_corpus, FeatureStats, HandCraftedVector};
use crate::fusion::{
    sweep_combinations, BundleInfo, ComponentScores, EarlyStrategy, Prepared, Preprocessor, SimComBundle, SweepResult,
};
use crate::nn::save_checkpoint;
use crate::sim::{lapredict_mask, lr_jit_mask, train_logistic, train_sim, LinearModel, LogisticConfig};
use crate::text::{commit_documents, Vocab};
use crate::util::{sha256_hex, to_json};

pub use config::{RunConfig, SplitConfig, SplitMode, SweepConfig};
pub use report::{Comparison, SignificanceReport, StatOutcome};

/// Identifies the configuration and seed behind an artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

impl Stamp {
    pub fn of(config: &RunConfig) -> Self {
        Stamp {
            config_hash: config.hash(),
            seed: config.seed,
        }
    }

    /// Comment line heading every text table.
    pub fn comment(&self) -> String {
        format!("# config_hash={} seed={}\n", self.config_hash, self.seed)
    }
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    #[serde(flatten)]
    stamp: &'a Stamp,
    #[serde(flatten)]
    body: &'a T,
}

/// Strips the stamp comment so a table can be parsed as plain CSV.
pub fn strip_stamp(text: &str) -> &str {
    match text.strip_prefix("# ") {
        Some(rest) => rest.split_once('\n').map_or("", |(_, body)| body),
        None => text,
    }
}

/// Files written by one run, in order, with their checksums.
struct Writer {
    dir: PathBuf,
    stamp: Stamp,
    written: Vec<String>,
    stages: usize,
}

impl Writer {
    fn new(dir: &Path, stamp: Stamp) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let log = dir.join("provenance.log");
        fs::write(&log, stamp.comment()).map_err(|e| Error::io(&log, e))?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            stamp,
            written: Vec::new(),
            stages: 0,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn raw(&mut self, name: &str, body: &[u8]) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        self.note(name);
        Ok(())
    }

    fn note(&mut self, name: &str) {
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
    }

    fn table(&mut self, name: &str, body: &str) -> Result<()> {
        let text = self.stamp.comment() + body;
        self.raw(name, text.as_bytes())
    }

    fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<()> {
        let text = to_json(&Stamped {
            stamp: &self.stamp,
            body,
        })?;
        self.raw(name, text.as_bytes())
    }

    fn checkpoint(&mut self, name: &str, model: &DeepModel) -> Result<()> {
        save_checkpoint(model, self.path(name))?;
        self.note(name);
        self.note(&format!("{name}.manifest"));
        Ok(())
    }

    /// Appends one completed stage to the provenance log.
    fn stage(&mut self, name: &str, reads: &[&str], writes: &[&str]) -> Result<()> {
        self.stages += 1;
        let line = format!(
            "{}\t{}\treads={}\twrites={}\n",
            self.stages,
            name,
            reads.join(","),
            writes.join(",")
        );
        let p = self.path("provenance.log");
        let mut f = fs::OpenOptions::new()
            .append(true)
            .open(&p)
            .map_err(|e| Error::io(&p, e))?;
        f.write_all(line.as_bytes()).map_err(|e| Error::io(&p, e))
    }

    /// Checksum index over everything written, stamped like the rest.
    fn finish(mut self) -> Result<()> {
        let mut files = BTreeMap::new();
        for name in &self.written {
            let p = self.path(name);
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            files.insert(name.clone(), sha256_hex(&bytes));
        }
        self.note("provenance.log");
        self.json("artifacts.json", &serde_json::json!({ "files": files }))
    }
}

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| Error::Stage {
        stage: name.to_string(),
        source: Box::new(e),
    })
}

/// Outcome of one train/validation/test run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub sweep: SweepResult,
    /// Test metrics per model name.
    pub test: BTreeMap<String, MetricReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub runs: Vec<RunOutcome>,
}

/// Reads the configured corpus, or generates the synthetic one.
pub fn load_corpus(config: &RunConfig) -> Result<Vec<CommitRecord>> {
    let mut corpus = match &config.corpus {
        Some(p) => load_commit_stream(p)?,
        None => synthesize_corpus(&config.synth)?,
    };
    sort_chronologically(&mut corpus);
    Ok(corpus)
}

pub fn run_pipeline(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let corpus = stage("load", || load_corpus(config))?;
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    if config.corpus.is_none() {
        write_commit_stream(config.out_dir.join("corpus.jsonl"), &corpus)?;
    }
    let features = stage("featurize", || featurize_corpus(&corpus))?;
    let mut runs = Vec::new();
    if config.drop_rates.is_empty() {
        runs.extend(run_variant(config, &corpus, &features, &config.out_dir)?);
    }
    for &rate in &config.drop_rates {
        let dir = config.out_dir.join(drop_dir_name(rate));
        let (kept, rows) = stage("drop", || {
            let kept = drop_large_commits(&corpus, rate)?;
            let index: HashMap<&str, usize> =
                corpus.iter().enumerate().map(|(i, c)| (c.commit_id.as_str(), i)).collect();
            let rows: Vec<HandCraftedVector> = kept.iter().map(|c| features[index[c.commit_id.as_str()]]).collect();
            Ok((kept, rows))
        })?;
        runs.extend(run_variant(config, &kept, &rows, &dir)?);
    }
    Ok(RunSummary { runs })
}

/// `drop_00`, `drop_10`, ... for the large-commit experiment.
pub fn drop_dir_name(rate: f64) -> String {
    format!("drop_{:02}", (rate * 100.0).round() as u32)
}

fn run_variant(
    config: &RunConfig,
    corpus: &[CommitRecord],
    features: &[HandCraftedVector],
    dir: &Path,
) -> Result<Vec<RunOutcome>> {
    match config.split.mode {
        SplitMode::Chronological => {
            let split = stage("split", || chronological_split(corpus, config.split.ratios))?;
            Ok(vec![run_split(config, corpus, features, &split, dir)?])
        }
        SplitMode::Kfold => (0..config.split.k)
            .map(|i| {
                let split = stage("split", || kfold_split(corpus, config.split.k, i, config.seed))?;
                run_split(config, corpus, features, &split, &dir.join(format!("fold_{i}")))
            })
            .collect(),
    }
}

/// Commits and features of one split, in corpus order.
struct Part<'a> {
    commits: Vec<&'a CommitRecord>,
    raw: Vec<HandCraftedVector>,
}

impl<'a> Part<'a> {
    fn new(ids: &[String], corpus: &'a [CommitRecord], features: &[HandCraftedVector], index: &HashMap<&str, usize>) -> Self {
        let pos: Vec<usize> = ids.iter().map(|id| index[id.as_str()]).collect();
        Part {
            commits: pos.iter().map(|&i| &corpus[i]).collect(),
            raw: pos.iter().map(|&i| features[i]).collect(),
        }
    }

    fn labels(&self) -> Result<Vec<u8>> {
        let owned: Vec<CommitRecord> = self.commits.iter().map(|&c| c.clone()).collect();
        labels_of(&owned)
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.raw.iter().map(|v| v.to_array().to_vec()).collect()
    }

    /// Model inputs; labels are attached only when `with_labels` is set.
    fn prepare(&self, pre: &Preprocessor, with_labels: bool) -> Result<Vec<Prepared>> {
        self.commits
            .iter()
            .zip(&self.raw)
            .map(|(c, v)| {
                let mut p = pre.prepare(c, *v)?;
                if !with_labels {
                    p.example.label = 0;
                }
                Ok(p)
            })
            .collect()
    }
}

fn examples(prepared: &[Prepared]) -> Vec<Example> {
    prepared.iter().map(|p| p.example.clone()).collect()
}

fn log_name(strategy: EarlyStrategy) -> String {
    match strategy {
        EarlyStrategy::None => "train_log_com.csv".into(),
        s => format!("train_log_{}.csv", s.as_str().to_lowercase()),
    }
}

fn checkpoint_name(strategy: EarlyStrategy) -> String {
    match strategy {
        EarlyStrategy::None => "com.ckpt".into(),
        s => format!("early_{}.ckpt", s.as_str().to_lowercase()),
    }
}

/// Name of a model's row in the metric reports.
pub fn model_name(strategy: EarlyStrategy) -> String {
    match strategy {
        EarlyStrategy::None => "com".into(),
        s => format!("early_{}", s.as_str().to_lowercase()),
    }
}

pub const BUNDLE_NAME: &str = "simcom++";

fn run_split(
    config: &RunConfig,
    corpus: &[CommitRecord],
    features: &[HandCraftedVector],
    split: &SplitAssignment,
    dir: &Path,
) -> Result<RunOutcome> {
    let stamp = Stamp::of(config);
    let mut w = Writer::new(dir, stamp.clone())?;
    let seed = config.seed;
    let index: HashMap<&str, usize> = corpus.iter().enumerate().map(|(i, c)| (c.commit_id.as_str(), i)).collect();
    let train = Part::new(split.ids(SplitRole::Train), corpus, features, &index);
    let val = Part::new(split.ids(SplitRole::Validation), corpus, features, &index);
    let test = Part::new(split.ids(SplitRole::Test), corpus, features, &index);
    let fp = split.train_fingerprint();

    w.json("split.json", split)?;
    w.stage("split", &["corpus"], &["split.json"])?;

    let stats = stage("features", || {
        let ids: Vec<&str> = corpus.iter().map(|c| c.commit_id.as_str()).collect();
        let test_set: std::collections::HashSet<&str> = split.test_ids.iter().map(String::as_str).collect();
        let labels: Vec<Option<u8>> = corpus
            .iter()
            .map(|c| if test_set.contains(c.commit_id.as_str()) { None } else { c.label })
            .collect();
        w.table("features.csv", &feature_table(&ids, features, &labels))?;
        let stats = FeatureStats::fit(&train.raw, SplitRole::Train, fp.clone())?;
        w.raw("feature_stats.json", to_json(&stats)?.as_bytes())?;
        Ok(stats)
    })?;
    w.stage("features", &["corpus", "train.features"], &["features.csv", "feature_stats.json"])?;

    let pre = stage("vocab", || {
        let docs: Vec<Vec<String>> = train.commits.iter().flat_map(|c| commit_documents(c)).collect();
        let vocab = Vocab::build(docs.iter().map(Vec::as_slice), config.com.vocab_size, config.com.min_frequency, fp.clone())?;
        w.raw("vocab.txt", vocab.to_file_string().as_bytes())?;
        Preprocessor::new(stats, vocab, config.com.shape)
    })?;
    w.stage("vocab", &["train.text"], &["vocab.txt"])?;

    let (train_in, val_in, test_in) = stage("prepare", || {
        Ok((train.prepare(&pre, true)?, val.prepare(&pre, true)?, test.prepare(&pre, false)?))
    })?;
    let (train_ex, val_ex) = (examples(&train_in), examples(&val_in));
    let vocab_size = pre.vocab.len();
    w.stage("prepare", &["train", "validation", "test.inputs"], &[])?;

    let train_labels = stage("sim", || train.labels())?;
    let (sim, lr_jit, lapredict) = stage("sim", || {
        let sim = train_sim(&train.raw, &train_labels, &config.forest, seed)?;
        let rows = train.rows();
        let lr = train_logistic(&rows, &train_labels, &lr_jit_mask(), &LogisticConfig::default())?;
        let la = train_logistic(&rows, &train_labels, &lapredict_mask(), &LogisticConfig::default())?;
        w.raw("sim_forest.txt", sim.to_text().as_bytes())?;
        let baselines: BTreeMap<&str, &LinearModel> = [("lapredict", &la), ("lr_jit", &lr)].into();
        w.json("baselines.json", &baselines)?;
        Ok((sim, lr, la))
    })?;
    w.stage("sim", &["train.features", "train.labels"], &["sim_forest.txt", "baselines.json"])?;

    let com_config = stage("grid", || {
        if !config.sweep.grid_search {
            return Ok(config.com.clone());
        }
        let g = grid_search(
            &config.sweep.learning_rates,
            &config.sweep.batch_sizes,
            &train_ex,
            &val_ex,
            vocab_size,
            &config.com,
            seed,
        )?;
        w.json("grid.json", &g)?;
        Ok(ComConfig {
            lr: g.lr,
            batch_size: g.batch_size,
            ..config.com.clone()
        })
    })?;
    if config.sweep.grid_search {
        w.stage("grid", &["train", "validation"], &["grid.json"])?;
    }

    let mut deep: BTreeMap<EarlyStrategy, DeepModel> = BTreeMap::new();
    let strategies: Vec<EarlyStrategy> = std::iter::once(EarlyStrategy::None)
        .chain(config.sweep.early.iter().copied())
        .collect();
    for s in strategies {
        let name = model_name(s);
        let (model, log): (DeepModel, TrainLog) = stage(&name, || match s {
            EarlyStrategy::None => train_com(&train_ex, &val_ex, vocab_size, &com_config, seed),
            s => train_early_fused(s, &train_ex, &val_ex, vocab_size, &com_config, seed),
        })?;
        let (ckpt, logf) = (checkpoint_name(s), log_name(s));
        stage(&name, || {
            w.checkpoint(&ckpt, &model)?;
            w.table(&logf, &log.to_csv())
        })?;
        w.stage(&name, &["train", "validation"], &[&ckpt, &logf])?;
        deep.insert(s, model);
    }

    let (sweep, bundle) = stage("sweep", || {
        let val_labels = val.labels()?;
        let sim_val: Vec<f64> = val.raw.iter().map(|v| sim.predict(&v.to_array())).collect::<Result<_>>()?;
        let mut early = BTreeMap::new();
        for (s, m) in &deep {
            if *s != EarlyStrategy::None {
                early.insert(*s, m.predict_all(&val_ex)?);
            }
        }
        let scores = ComponentScores {
            sim: sim_val,
            com: deep[&EarlyStrategy::None].predict_all(&val_ex)?,
            early,
        };
        let sweep = sweep_combinations(&scores, &val_labels)?;
        w.table("sweep.csv", &sweep.to_csv())?;
        let chosen = sweep.chosen();
        let bundle = SimComBundle {
            sim: sim.clone(),
            com: deep[&EarlyStrategy::None].clone(),
            early_fused: deep.get(&chosen.early).filter(|_| chosen.early != EarlyStrategy::None).cloned(),
            rule: chosen.rule.clone(),
            fingerprint: fp.clone(),
        };
        let info = BundleInfo {
            com_config: com_config.clone(),
            config_hash: stamp.config_hash.clone(),
            seed,
        };
        bundle.save(dir, &pre, &info)?;
        for f in ["bundle.json", "com.ckpt", "com.ckpt.manifest"] {
            w.note(f);
        }
        Ok((sweep, bundle))
    })?;
    w.stage("sweep", &["validation"], &["sweep.csv", "bundle.json"])?;

    let (test_scores, test_labels) = stage("evaluate", || {
        let labels = test.labels()?;
        let mut scores: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let raw = |f: &dyn Fn(&[f64]) -> Result<f64>| -> Result<Vec<f64>> {
            test.raw.iter().map(|v| f(&v.to_array())).collect()
        };
        scores.insert("sim".into(), raw(&|x| sim.predict(x))?);
        scores.insert("lr_jit".into(), raw(&|x| lr_jit.predict(x))?);
        scores.insert("lapredict".into(), raw(&|x| lapredict.predict(x))?);
        let test_ex = examples(&test_in);
        for (s, m) in &deep {
            scores.insert(model_name(*s), m.predict_all(&test_ex)?);
        }
        let fused: Vec<f64> = test_in.iter().map(|p| bundle.predict(p).map(|b| b.fused)).collect::<Result<_>>()?;
        scores.insert(BUNDLE_NAME.into(), fused);
        Ok((scores, labels))
    })?;
    let test_metrics = stage("evaluate", || {
        let mut metrics = BTreeMap::new();
        for (name, s) in &test_scores {
            metrics.insert(name.clone(), MetricReport::compute(s, &test_labels)?);
        }
        let mut csv = format!("model,{}\n", MetricReport::CSV_HEADER);
        for (name, m) in &metrics {
            csv.push_str(&format!("{name},{}\n", m.csv_row()));
        }
        w.table("metrics.csv", &csv)?;
        w.json(
            "metrics.json",
            &serde_json::json!({
                "train_fingerprint": fp,
                "test_size": test_labels.len(),
                "models": metrics,
            }),
        )?;
        Ok(metrics)
    })?;
    w.stage("evaluate", &["test.inputs", "test.labels"], &["metrics.csv", "metrics.json"])?;

    stage("analysis", || {
        let (overlap, correction) = report::overlap_and_correction(&test_scores, &test_labels)?;
        w.json("overlap.json", &overlap)?;
        w.json("correction.json", &correction)?;
        let sig = report::significance(&test_scores, &test_labels, config.significance_groups, seed);
        w.json("significance.json", &sig)
    })?;
    w.stage("analysis", &["test.scores", "test.labels"], &["overlap.json", "correction.json", "significance.json"])?;
    w.finish()?;

    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        sweep,
        test: test_metrics,
    })
}
