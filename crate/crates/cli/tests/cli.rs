use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use poaml_cli::{benchmark_split, run_benchmark};
use poaml_core::dataset::{generate_synthetic, shuffle_split, Dataset, GeneratorParams};
use poaml_core::regressors::ModelKind;

fn poaml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poaml")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/five_node_partition.json")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_data_examples() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(poaml(&["gen-data", "--n", "9000", "--seed", "42", "--out", s(&a)]).status.success());
    assert!(poaml(&["gen-data", "--n", "9000", "--seed", "42", "--out", s(&b)]).status.success());
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 9001);
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());

    let empty = dir.path().join("empty.csv");
    let o = poaml(&["gen-data", "--n", "0", "--seed", "1", "--out", s(&empty)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&empty).unwrap().trim_end(), "delay_ms,jitter_ms,loss_pct,throughput_mbps");

    let o = poaml(&["gen-data", "--n", "5", "--out", s(&dir.path().join("missing/dir/x.csv"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn benchmark_examples() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let out = dir.path().join("r.json");
    assert!(poaml(&["gen-data", "--n", "400", "--seed", "3", "--out", s(&data)]).status.success());
    let o = poaml(&["benchmark", "--data", s(&data), "--seed", "1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    for kind in ModelKind::ALL {
        assert!(stdout.contains(kind.display_name()), "{kind}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let kinds: Vec<&str> = report["models"].as_array().unwrap().iter().map(|m| m["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["GradientBoosting", "HistGradientBoosting", "RandomForest", "ExtraTrees", "KNearestNeighbors"]);
    assert_eq!(report["timings"].as_array().unwrap().len(), 5);
    assert_eq!(report["config"]["n_test"], 80);

    let o = poaml(&["benchmark", "--data", s(&data), "--test-fraction", "0"]);
    assert_eq!(o.status.code(), Some(2));

    let tiny = dir.path().join("tiny.csv");
    assert!(poaml(&["gen-data", "--n", "9", "--out", s(&tiny)]).status.success());
    let o = poaml(&["benchmark", "--data", s(&tiny)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("too small"));

    let o = poaml(&["benchmark", "--data", s(&dir.path().join("nope.csv"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn duplicated_test_features_collapse_knn_rate() {
    let ds = generate_synthetic(&GeneratorParams { n: 600, seed: 8, ..Default::default() }).unwrap();
    let (train, test) = shuffle_split(&ds, 0.2, 8).unwrap();
    let doubled = Dataset::new(test.samples.iter().flat_map(|s| [*s, *s]).collect());
    let split = benchmark_split(&train, &doubled, 8).unwrap();
    let knn = split.results.iter().find(|r| r.kind == ModelKind::KNearestNeighbors).unwrap();
    assert!(knn.randomness.rate_pct <= 50.0, "{}", knn.randomness.rate_pct);
}

#[test]
fn benchmark_rejects_bad_inputs() {
    let ds = generate_synthetic(&GeneratorParams { n: 50, seed: 1, ..Default::default() }).unwrap();
    assert_eq!(run_benchmark(&ds, 0, 0.0).err().unwrap().code, 2);
    assert_eq!(run_benchmark(&ds, 0, 1.0).err().unwrap().code, 2);
    let small = Dataset::new(ds.samples[..9].to_vec());
    assert_eq!(run_benchmark(&small, 0, 0.2).err().unwrap().code, 1);
}

#[test]
fn simulate_bundled_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = poaml(&["simulate", "--config", s(&scenario()), "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ledgers: Vec<String> = (0..5)
        .map(|i| std::fs::read_to_string(dir.path().join(format!("node_{i}.jsonl"))).unwrap())
        .collect();
    assert!(ledgers.iter().all(|l| l == &ledgers[0]));
    assert!(ledgers[0].lines().count() > 1);
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("time_ms,event_kind,sender,receiver,detail\n"));
    for i in 0..5 {
        let o = poaml(&["verify", "--ledger", s(&dir.path().join(format!("node_{i}.jsonl")))]);
        assert_eq!(o.status.code(), Some(0));
    }
}

#[test]
fn simulate_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"n_nodes": 3, "quorum": 4, "max_rounds": 2}"#).unwrap();
    let o = poaml(&["simulate", "--config", s(&cfg), "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("quorum"));

    std::fs::write(&cfg, r#"{"n_nodes": 3, "max_rounds": 2, "links": {"default": {"base_delay_ms": -1, "jitter_sigma_ms": 1, "loss_prob": 0, "capacity_mbps": 1}}}"#).unwrap();
    let o = poaml(&["simulate", "--config", s(&cfg), "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("links.default.base_delay_ms"));
}

#[test]
fn simulate_zero_rounds_is_genesis_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = poaml(&["simulate", "--config", s(&scenario()), "--out-dir", s(dir.path()), "--max-rounds", "0"]);
    assert_eq!(o.status.code(), Some(0));
    for i in 0..5 {
        let l = std::fs::read_to_string(dir.path().join(format!("node_{i}.jsonl"))).unwrap();
        assert_eq!(l.lines().count(), 1);
        assert!(l.contains("\"index\":0,"));
    }
}

#[test]
fn verify_examples() {
    let dir = tempfile::tempdir().unwrap();
    let o = poaml(&["simulate", "--config", s(&scenario()), "--out-dir", s(dir.path())]);
    assert!(o.status.success());
    let ledger = dir.path().join("node_0.jsonl");
    let keys = dir.path().join("public_keys.json");
    let bytes = std::fs::read(&ledger).unwrap();

    // Flip one byte inside block 3's payload (its signature field).
    let line_start: usize = bytes.split(|&b| b == b'\n').take(3).map(|l| l.len() + 1).sum();
    let line = &bytes[line_start..];
    let sig = line.windows(13).position(|w| w == b"\"signature\":\"").unwrap() + 13;
    let mut bad = bytes.clone();
    bad[line_start + sig + 5] = if bad[line_start + sig + 5] == b'0' { b'1' } else { b'0' };
    let bad_path = dir.path().join("bad.jsonl");
    std::fs::write(&bad_path, &bad).unwrap();
    let o = poaml(&["verify", "--ledger", s(&bad_path), "--keys", s(&keys)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("violation at index 3"), "{}", stderr(&o));

    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let o = poaml(&["verify", "--ledger", s(&empty), "--keys", s(&keys)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing genesis"));

    let garbled = dir.path().join("garbled.jsonl");
    let text = String::from_utf8(bytes).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[1] = "{not json";
    std::fs::write(&garbled, lines.join("\n") + "\n").unwrap();
    let o = poaml(&["verify", "--ledger", s(&garbled), "--keys", s(&keys)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}
