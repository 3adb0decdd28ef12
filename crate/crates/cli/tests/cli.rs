use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn toy(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/toy").join(name)
}

fn wordtrust(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wordtrust"))
        .args(args)
        .arg("-q")
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn small_corpus(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(toy("corpus.jsonl")).unwrap();
    let path = dir.join("tiny.jsonl");
    std::fs::write(&path, text.lines().take(40).collect::<Vec<_>>().join("\n")).unwrap();
    path
}

#[test]
fn judge_with_config_file_writes_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    std::fs::write(
        dir.path().join("default.cfg"),
        format!(
            "pairs = {}\nsamples = 200\ntop_n = 20  # overridden below\n",
            toy("pairs.csv").display()
        ),
    )
    .unwrap();
    let out = wordtrust(
        &[
            "judge",
            "--config",
            "default.cfg",
            "--corpus",
            corpus.to_str().unwrap(),
            "--embeddings",
            toy("vectors_a.vec").to_str().unwrap(),
            toy("vectors_b.vec").to_str().unwrap(),
            "--seed",
            "7",
            "--top-n",
            "5",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let verdicts = std::fs::read_to_string(dir.path().join("verdicts.jsonl")).unwrap();
    assert_eq!(verdicts.lines().count(), 40);
    for line in verdicts.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["words"].as_array().unwrap().len() <= 5);
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config_file"], "default.cfg");
    assert!(manifest["tool_config"].as_str().unwrap().contains("top_n=5"));
}

#[test]
fn judge_all_configs_emits_96_records_per_instance() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let out = wordtrust(
        &[
            "judge",
            "--corpus",
            corpus.to_str().unwrap(),
            "--embeddings",
            toy("vectors_a.vec").to_str().unwrap(),
            "--pairs",
            toy("pairs.csv").to_str().unwrap(),
            "--samples",
            "100",
            "--tool-config",
            "all",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let verdicts = std::fs::read_to_string(dir.path().join("o/verdicts.jsonl")).unwrap();
    assert_eq!(verdicts.lines().count(), 40 * 96);
}

#[test]
fn missing_embedding_file_is_a_data_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let out = wordtrust(
        &["judge", "--corpus", corpus.to_str().unwrap(), "--embeddings", "nowhere/e1.vec", "--pairs", toy("pairs.csv").to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere/e1.vec"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(wordtrust(&["judge", "--frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(wordtrust(&["analyze"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.cfg"), "colour = red\n").unwrap();
    let out = wordtrust(&["analyze", "--config", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn calibrate_builds_pairs_from_a_thesaurus() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("words.txt"), "sport\nfood\nriver\ngame\nmeal\nlake\n").unwrap();
    std::fs::write(
        dir.path().join("thesaurus.json"),
        r#"{"sport": ["game", "match"], "food": ["meal", "bread"], "river": ["lake"]}"#,
    )
    .unwrap();
    let out = wordtrust(
        &[
            "calibrate",
            "--embeddings",
            toy("vectors_a.vec").to_str().unwrap(),
            "--common-words",
            "words.txt",
            "--thesaurus",
            "thesaurus.json",
            "--unrelated",
            "8",
            "--out",
            "cal",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pairs = std::fs::read_to_string(dir.path().join("cal/pairs.csv")).unwrap();
    assert_eq!(pairs.lines().count(), 1 + 5 + 8);
    let cal: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cal/vectors_a.calibration.json")).unwrap()).unwrap();
    assert!(cal["auc"].as_f64().unwrap() > 0.9);
}

#[test]
fn sample_and_metrics_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus: String = (0..30)
        .map(|i| format!("{{\"id\":\"i{i}\",\"text\":\"word{i} goal\",\"label\":\"{}\"}}\n", ["sport", "food"][i % 2]))
        .collect();
    std::fs::write(d.join("c.jsonl"), corpus).unwrap();
    std::fs::create_dir(d.join("j")).unwrap();
    let verdicts: String = (0..30)
        .map(|i| {
            let v = ["trustworthy", "untrustworthy", "undefined"][i % 3];
            format!("{{\"id\":\"i{i}\",\"verdict\":\"{v}\",\"trust\":[1.0,0.0,0.0],\"skipped\":false,\"words\":[]}}\n")
        })
        .collect();
    std::fs::write(d.join("j/verdicts.jsonl"), verdicts).unwrap();
    let explanations: String = (0..30)
        .map(|i| format!("{{\"id\":\"i{i}\",\"class\":\"{}\",\"entries\":[[\"goal\",0.5]]}}\n", ["sport", "food"][i % 2]))
        .collect();
    std::fs::write(d.join("j/explanations.jsonl"), explanations).unwrap();
    let out = wordtrust(&["sample", "--corpus", "c.jsonl", "--judged", "j", "--n", "9", "--jitter", "0", "--out", "s"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pool = std::fs::read_to_string(d.join("s/pool.jsonl")).unwrap();
    assert_eq!(pool.lines().count(), 9);
    for v in ["\"trustworthy\"", "\"untrustworthy\"", "\"undefined\""] {
        assert_eq!(pool.lines().filter(|l| l.ends_with(&format!("\"oracle\":{v}}}"))).count(), 3);
    }

    std::fs::write(
        d.join("gt.jsonl"),
        "{\"id\":\"a\",\"oracle\":0,\"label\":0}\n{\"id\":\"b\",\"oracle\":1,\"label\":0}\n{\"id\":\"c\",\"oracle\":\"undefined\",\"label\":\"undefined\"}\n",
    )
    .unwrap();
    let out = wordtrust(&["metrics", "--ground-truth", "gt.jsonl", "--out", "m"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("m/metrics.json")).unwrap()).unwrap();
    assert_eq!(m["confusion"], serde_json::json!([[1, 1, 0], [0, 0, 0], [0, 0, 1]]));
    assert_eq!(m["trustworthy"]["recall"], 0.5);
}

#[test]
fn analyze_names_one_method_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = small_corpus(d);
    let run = wordtrust(
        &[
            "noise-run",
            "--corpus",
            corpus.to_str().unwrap(),
            "--embeddings",
            toy("vectors_a.vec").to_str().unwrap(),
            "--pairs",
            toy("pairs.csv").to_str().unwrap(),
            "--bias-pool",
            toy("bias_pool.txt").to_str().unwrap(),
            "--noise",
            "bias",
            "removal",
            "--samples",
            "100",
            "--instances",
            "true",
            "--out",
            "grid",
        ],
        d,
    );
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(d.join("grid/instances.jsonl").exists());
    let out = wordtrust(&["analyze", "--results", "grid/results.jsonl", "--out", "a"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("a/report.json")).unwrap()).unwrap();
    assert!(report["selected"]["config_index"].as_u64().unwrap() < 96);
    assert!(report["selected"]["method"]["noise_subset"].as_array().is_some());
    assert_eq!(report["methods"].as_array().unwrap().len(), 3 * 2 * 4);
}
