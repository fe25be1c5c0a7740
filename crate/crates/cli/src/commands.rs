use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use simcom::corpus::{labels_of, load_commit_stream, sort_chronologically, synthesize_corpus, CommitRecord};
use simcom::eval::MetricReport;
use simcom::explain::explain_instance;
use simcom::features::{feature_table, featurize_corpus, parse_feature_table, HandCraftedVector};
use simcom::fusion::{BundleScore, SimComBundle};
use simcom::pipeline::{drop_dir_name, run_pipeline, strip_stamp, RunConfig, RunSummary, BUNDLE_NAME};
use simcom::{Error, Result};

use crate::{Command, Global};

const DEFAULT_DROP_RATES: [f64; 5] = [0.0, 0.1, 0.2, 0.3, 0.4];

pub fn dispatch(command: Command, global: Global) -> Result<()> {
    let config = resolve_config(&global)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| match command {
        Command::Synthesize => synthesize(&config, &global),
        Command::ExtractFeatures => extract_features(&global),
        Command::Train => train(&config),
        Command::Sweep => sweep(&config),
        Command::Evaluate => evaluate(&config, &global),
        Command::Predict => predict(&global),
        Command::Explain { commit } => explain(&config, &global, &commit),
        Command::DropExperiment { rates } => drop_experiment(config, rates),
        Command::Run => run(&config),
    })
}

fn resolve_config(global: &Global) -> Result<RunConfig> {
    let mut config = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if let Some(out) = &global.out {
        config.out_dir = out.clone();
    }
    if let Some(corpus) = &global.corpus {
        config.corpus = Some(corpus.clone());
    }
    if global.threads.is_some() {
        config.threads = global.threads;
    }
    config.validate()?;
    Ok(config)
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("--{flag} is required for this command")))
}

/// Writes to `--out` when given, otherwise to stdout.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|()| stdout.flush())
                .map_err(|e| Error::InvalidArgument(format!("stdout: {e}")))
        }
    }
}

fn load_sorted(path: &Path) -> Result<Vec<CommitRecord>> {
    let mut corpus = load_commit_stream(path)?;
    sort_chronologically(&mut corpus);
    Ok(corpus)
}

fn synthesize(config: &RunConfig, global: &Global) -> Result<()> {
    let mut spec = config.synth.clone();
    if let Some(seed) = global.seed {
        spec.seed = seed;
    }
    let mut text = String::new();
    for commit in synthesize_corpus(&spec)? {
        let line = serde_json::to_string(&commit).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        text.push_str(&line);
        text.push('\n');
    }
    emit(global.out.as_deref(), &text)
}

fn extract_features(global: &Global) -> Result<()> {
    let corpus = load_sorted(required(&global.corpus, "corpus")?)?;
    let rows = if corpus.is_empty() { Vec::new() } else { featurize_corpus(&corpus)? };
    let ids: Vec<&str> = corpus.iter().map(|c| c.commit_id.as_str()).collect();
    let labels: Vec<Option<u8>> = corpus.iter().map(|c| c.label).collect();
    emit(global.out.as_deref(), &feature_table(&ids, &rows, &labels))
}

fn print(text: &str) -> Result<()> {
    emit(None, text)
}

fn train(config: &RunConfig) -> Result<()> {
    let summary = run_pipeline(config)?;
    let mut s = String::new();
    for run in &summary.runs {
        let chosen = run.sweep.chosen();
        let _ = writeln!(s, "{}", run.dir.join("bundle.json").display());
        let _ = writeln!(s, "  early {}, late {}", chosen.early, chosen.rule.strategy);
        for ckpt in ["sim_forest.txt", "com.ckpt", "early_sc.ckpt", "early_tc.ckpt", "early_amf.ckpt", "early_gmf.ckpt"] {
            if run.dir.join(ckpt).exists() {
                let _ = writeln!(s, "  {ckpt}");
            }
        }
    }
    print(&s)
}

fn sweep(config: &RunConfig) -> Result<()> {
    let summary = run_pipeline(config)?;
    let mut s = String::new();
    for run in &summary.runs {
        if summary.runs.len() > 1 {
            let _ = writeln!(s, "# {}", run.dir.display());
        }
        s.push_str(&run.sweep.to_csv());
        let chosen = run.sweep.chosen();
        let _ = writeln!(s, "# chosen: {} + {} (val auc_pr {})", chosen.early, chosen.rule.strategy, chosen.val_auc_pr);
    }
    print(&s)
}

fn metrics_table(summary: &RunSummary) -> String {
    let mut s = format!("run,model,{}\n", MetricReport::CSV_HEADER);
    for run in &summary.runs {
        for (model, m) in &run.test {
            let _ = writeln!(s, "{},{model},{}", run.dir.display(), m.csv_row());
        }
    }
    s
}

/// Bundle scores for every commit in the stream, features computed over the
/// stream's own history.
fn score_stream(bundle_path: &Path, corpus: &[CommitRecord]) -> Result<Vec<BundleScore>> {
    let (bundle, pre, _) = SimComBundle::load(bundle_path)?;
    if corpus.is_empty() {
        return Ok(Vec::new());
    }
    let rows = featurize_corpus(corpus)?;
    corpus
        .iter()
        .zip(rows)
        .map(|(c, r)| bundle.predict(&pre.prepare(c, r)?))
        .collect()
}

fn evaluate(config: &RunConfig, global: &Global) -> Result<()> {
    let Some(bundle) = &global.bundle else {
        return print(&metrics_table(&run_pipeline(config)?));
    };
    let corpus = load_sorted(required(&global.corpus, "corpus")?)?;
    let labels = labels_of(&corpus)?;
    let scores = score_stream(bundle, &corpus)?;
    let mut s = format!("model,{}\n", MetricReport::CSV_HEADER);
    let mut column = |name: &str, pick: &dyn Fn(&BundleScore) -> f64| -> Result<()> {
        let v: Vec<f64> = scores.iter().map(pick).collect();
        let _ = writeln!(s, "{name},{}", MetricReport::compute(&v, &labels)?.csv_row());
        Ok(())
    };
    column("sim", &|b| b.sim)?;
    column("com", &|b| b.com)?;
    if scores.first().is_some_and(|b| b.early.is_some()) {
        column("early", &|b| b.early.unwrap_or(f64::NAN))?;
    }
    column(BUNDLE_NAME, &|b| b.fused)?;
    print(&s)
}

fn predict(global: &Global) -> Result<()> {
    let bundle = required(&global.bundle, "bundle")?;
    let corpus = load_sorted(required(&global.corpus, "corpus")?)?;
    let scores = score_stream(bundle, &corpus)?;
    let mut s = String::new();
    if !scores.is_empty() {
        s.push_str("commit_id,fused,class,sim,com,early\n");
    }
    for (c, b) in corpus.iter().zip(&scores) {
        let early = b.early.map(|e| e.to_string()).unwrap_or_default();
        let class = if b.defective { "defective" } else { "clean" };
        let _ = writeln!(s, "{},{},{class},{},{},{early}", c.commit_id, b.fused, b.sim, b.com);
    }
    emit(global.out.as_deref(), &s)
}

fn explain(config: &RunConfig, global: &Global, commit: &str) -> Result<()> {
    let bundle_path = required(&global.bundle, "bundle")?;
    let stream = required(&global.corpus, "corpus")?;
    let (bundle, _, _) = SimComBundle::load(bundle_path)?;
    let table_path = bundle_path.parent().unwrap_or(Path::new(".")).join("features.csv");
    let table = fs::read_to_string(&table_path)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", table_path.display())))?;
    // Rows with a label are the ones the models were fitted or tuned on.
    let reference: Vec<HandCraftedVector> = parse_feature_table(strip_stamp(&table))?
        .into_iter()
        .filter(|r| r.label.is_some())
        .map(|r| r.features)
        .collect();
    let corpus = load_sorted(stream)?;
    let at = corpus
        .iter()
        .position(|c| c.commit_id == commit)
        .ok_or_else(|| Error::InvalidArgument(format!("commit \"{commit}\" is not in the stream")))?;
    let rows = featurize_corpus(&corpus[..=at])?;
    let e = explain_instance(&bundle.sim, &rows[at], &reference, &config.explain, config.seed)?;
    print(&e.to_table())
}

fn drop_experiment(mut config: RunConfig, rates: Vec<f64>) -> Result<()> {
    if !rates.is_empty() {
        config.drop_rates = rates;
    } else if config.drop_rates.is_empty() {
        config.drop_rates = DEFAULT_DROP_RATES.to_vec();
    }
    config.validate()?;
    let summary = run_pipeline(&config)?;
    let mut s = format!("drop_rate,run,{}\n", MetricReport::CSV_HEADER);
    for run in &summary.runs {
        let rate = config
            .drop_rates
            .iter()
            .find(|r| run.dir.components().any(|c| c.as_os_str() == drop_dir_name(**r).as_str()))
            .map_or(String::new(), f64::to_string);
        if let Some(m) = run.test.get(BUNDLE_NAME) {
            let _ = writeln!(s, "{rate},{},{}", run.dir.display(), m.csv_row());
        }
    }
    print(&s)
}

fn run(config: &RunConfig) -> Result<()> {
    let summary = run_pipeline(config)?;
    let mut s = String::new();
    for run in &summary.runs {
        let chosen = run.sweep.chosen();
        let _ = writeln!(s, "{}: early {}, late {}", run.dir.display(), chosen.early, chosen.rule.strategy);
        for (model, m) in &run.test {
            let _ = writeln!(s, "  {model:<10} auc_roc {:.4}  auc_pr {:.4}  f1 {:.4}", m.auc_roc, m.auc_pr, m.f1);
        }
    }
    print(&s)
}
