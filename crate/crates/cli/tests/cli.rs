use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use simcom::corpus::{load_commit_stream, write_commit_stream};
use simcom::features::featurize_corpus;
use simcom::fusion::SimComBundle;
use simcom::pipeline::RunConfig;

fn simcom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simcom")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let mut c = RunConfig::micro();
    c.synth.size = 400;
    c.com.epochs = 2;
    c.forest.n_trees = 20;
    c.significance_groups = 4;
    let path = dir.join("small.toml");
    fs::write(&path, c.to_toml().unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// One trained run shared by the tests that need a bundle.
fn trained() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let root = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli-trained");
        let _ = fs::remove_dir_all(&root);
        fs::create_dir_all(&root).unwrap();
        let config = small_config(&root);
        let out = root.join("run");
        let r = simcom(&["run", "--config", s(&config), "--out", s(&out)]);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
        assert!(stdout(&r).contains("simcom++"));
        let corpus = load_commit_stream(out.join("corpus.jsonl")).unwrap();
        write_commit_stream(root.join("last10.jsonl"), &corpus[corpus.len() - 10..]).unwrap();
        root
    })
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&simcom(&["--help"])), 0);
    assert_eq!(code(&simcom(&["predict", "--help"])), 0);
    assert_eq!(code(&simcom(&[])), 1);
    assert_eq!(code(&simcom(&["run", "--seed", "many"])), 1);
    assert_eq!(code(&simcom(&["frobnicate"])), 1);
    let r = simcom(&["predict", "--corpus", "x.jsonl"]);
    assert_eq!(code(&r), 1);
    assert!(String::from_utf8_lossy(&r.stderr).contains("--bundle"));
}

#[test]
fn bad_inputs_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.jsonl");
    assert_eq!(code(&simcom(&["extract-features", "--corpus", s(&missing)])), 2);

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "drop_rates = [1.5]\n").unwrap();
    assert_eq!(code(&simcom(&["run", "--config", s(&bad)])), 1);
    fs::write(&bad, "seed = \"x\"\n").unwrap();
    assert_eq!(code(&simcom(&["run", "--config", s(&bad)])), 1);

    let stream = tmp.path().join("s.jsonl");
    fs::write(&stream, "{\"commit_id\": 3}\n").unwrap();
    assert_eq!(code(&simcom(&["extract-features", "--corpus", s(&stream)])), 2);
}

#[test]
fn diverging_training_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = RunConfig::micro();
    c.synth.size = 200;
    c.forest.n_trees = 5;
    c.com.lr = 1e250;
    c.com.epochs = 2;
    let path = tmp.path().join("c.toml");
    fs::write(&path, c.to_toml().unwrap()).unwrap();
    let r = simcom(&["train", "--config", s(&path), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&r), 3, "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn synthesize_then_extract() {
    let tmp = tempfile::tempdir().unwrap();
    let stream = tmp.path().join("c.jsonl");
    assert_eq!(code(&simcom(&["synthesize", "--seed", "3", "--out", s(&stream)])), 0);
    let corpus = load_commit_stream(&stream).unwrap();
    assert_eq!(corpus.len(), 2000);
    let again = simcom(&["synthesize", "--seed", "3"]);
    assert_eq!(stdout(&again).as_bytes(), fs::read(&stream).unwrap());

    let table = stdout(&simcom(&["extract-features", "--corpus", s(&stream)]));
    let mut lines = table.lines();
    assert!(lines.next().unwrap().starts_with("commit_id,ns,nd,nf,entropy,la"));
    assert_eq!(lines.count(), 2000);
}

#[test]
fn predict_matches_in_process_scores() {
    let root = trained();
    let bundle = root.join("run/bundle.json");
    let stream = root.join("last10.jsonl");
    let r = simcom(&["predict", "--bundle", s(&bundle), "--corpus", s(&stream)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let text = stdout(&r);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "commit_id,fused,class,sim,com,early");

    let (model, pre, _) = SimComBundle::load(&bundle).unwrap();
    let corpus = load_commit_stream(&stream).unwrap();
    let rows = featurize_corpus(&corpus).unwrap();
    let mut n = 0;
    for ((line, c), row) in lines.zip(&corpus).zip(rows) {
        let want = model.predict(&pre.prepare(c, row).unwrap()).unwrap();
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[0], c.commit_id);
        assert_eq!(cells[1].parse::<f64>().unwrap(), want.fused);
        assert_eq!(cells[2], if want.defective { "defective" } else { "clean" });
        assert_eq!(cells[3].parse::<f64>().unwrap(), want.sim);
        assert_eq!(cells[4].parse::<f64>().unwrap(), want.com);
        n += 1;
    }
    assert_eq!(n, 10);
}

#[test]
fn predict_needs_no_labels_and_accepts_empty_streams() {
    let root = trained();
    let bundle = root.join("run/bundle.json");
    let tmp = tempfile::tempdir().unwrap();
    let mut corpus = load_commit_stream(root.join("last10.jsonl")).unwrap();
    for c in &mut corpus {
        c.label = None;
    }
    let unlabeled = tmp.path().join("u.jsonl");
    write_commit_stream(&unlabeled, &corpus).unwrap();
    let r = simcom(&["predict", "--bundle", s(&bundle), "--corpus", s(&unlabeled)]);
    assert_eq!(code(&r), 0);
    assert_eq!(stdout(&r).lines().count(), 11);
    let r = simcom(&["evaluate", "--bundle", s(&bundle), "--corpus", s(&unlabeled)]);
    assert_eq!(code(&r), 2);

    let empty = tmp.path().join("e.jsonl");
    fs::write(&empty, "").unwrap();
    let r = simcom(&["predict", "--bundle", s(&bundle), "--corpus", s(&empty)]);
    assert_eq!(code(&r), 0);
    assert!(r.stdout.is_empty());
}

#[test]
fn evaluate_and_explain_a_saved_bundle() {
    let root = trained();
    let bundle = root.join("run/bundle.json");
    let stream = root.join("run/corpus.jsonl");
    let r = simcom(&["evaluate", "--bundle", s(&bundle), "--corpus", s(&stream)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let text = stdout(&r);
    assert!(text.starts_with("model,auc_roc,auc_pr"));
    assert!(text.lines().any(|l| l.starts_with("simcom++,")));

    let corpus = load_commit_stream(&stream).unwrap();
    let id = &corpus[corpus.len() - 1].commit_id;
    let r = simcom(&["explain", "--bundle", s(&bundle), "--corpus", s(&stream), "--commit", id]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(stdout(&r).lines().count() >= 3);
    let r = simcom(&["explain", "--bundle", s(&bundle), "--corpus", s(&stream), "--commit", "nope"]);
    assert_eq!(code(&r), 1);
}

#[test]
fn corrupted_bundle_is_a_data_error() {
    let root = trained();
    let tmp = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(root.join("run")).unwrap() {
        let p = entry.unwrap().path();
        if p.is_file() {
            fs::copy(&p, tmp.path().join(p.file_name().unwrap())).unwrap();
        }
    }
    let manifest = tmp.path().join("bundle.json");
    let text = fs::read_to_string(&manifest).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let fp = v["fingerprint"].as_str().unwrap();
    fs::write(&manifest, text.replace(fp, "0000")).unwrap();
    let r = simcom(&["predict", "--bundle", s(&manifest), "--corpus", s(&root.join("last10.jsonl"))]);
    assert_eq!(code(&r), 2, "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn pipeline_commands_share_one_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let out = tmp.path().join("o");
    let r = simcom(&["sweep", "--config", s(&config), "--out", s(&out), "--threads", "2"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let text = stdout(&r);
    assert!(text.starts_with("early_strategy,late_rule,weights"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 21);
    let sweep_csv = fs::read_to_string(out.join("sweep.csv")).unwrap();

    let r = simcom(&["evaluate", "--config", s(&config), "--out", s(&out)]);
    assert_eq!(code(&r), 0);
    assert_eq!(stdout(&r).lines().count(), 10);
    assert_eq!(fs::read_to_string(out.join("sweep.csv")).unwrap(), sweep_csv);

    let r = simcom(&["train", "--config", s(&config), "--out", s(&out), "--seed", "5"]);
    assert_eq!(code(&r), 0);
    assert!(stdout(&r).contains("com.ckpt"));
}

#[test]
fn drop_experiment_writes_one_directory_per_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let out = tmp.path().join("o");
    let r = simcom(&["drop-experiment", "--config", s(&config), "--out", s(&out), "--rates", "0,0.2"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let text = stdout(&r);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("0,") && rows[1].starts_with("0.2,"));
    assert!(out.join("drop_00/metrics.csv").exists() && out.join("drop_20/metrics.csv").exists());
}
