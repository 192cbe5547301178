use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn logsight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_logsight")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    data: PathBuf,
    checkpoint: PathBuf,
    splits: PathBuf,
}

/// A small model trained once through the binary.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("corpus.tsv");
        let checkpoint = dir.path().join("model.json");
        let splits = dir.path().join("splits");
        let out = logsight(&["gen-data", "--n-normal", "400", "--n-anomaly", "400", "--seed", "5", "--out", p(&data)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let out = logsight(&[
            "train", "--data", p(&data), "--out", p(&checkpoint), "--seed", "5",
            "--train-size", "600", "--val-size", "100", "--test-size", "100",
            "--split-dir", p(&splits),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("epoch 3:"));
        Fixture { _dir: dir, data, checkpoint, splits }
    })
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.tsv");
    let b = dir.path().join("b.tsv");
    for path in [&a, &b] {
        let out = logsight(&["gen-data", "--n-normal", "30", "--n-anomaly", "10", "--seed", "9", "--out", p(path)]);
        assert!(out.status.success());
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 40);
    assert_eq!(text.lines().filter(|l| l.starts_with("1\t")).count(), 10);
}

#[test]
fn train_then_eval() {
    let f = fixture();
    let json = f.splits.join("metrics.json");
    let out = logsight(&["eval", "--data", p(&f.splits.join("test.tsv")), "--checkpoint", p(&f.checkpoint), "--json", p(&json)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.starts_with("Model: logsight-encoder\n"), "{table}");
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let acc = metrics["accuracy"].as_f64().unwrap();
    assert!(acc >= 0.95, "{table}");
    assert_eq!(metrics["support"]["Normal"].as_u64().unwrap() + metrics["support"]["Anomaly"].as_u64().unwrap(), 100);
    for split in ["train.tsv", "val.tsv", "test.tsv"] {
        assert!(f.splits.join(split).exists());
    }
    assert!(f.data.exists());
}

#[test]
fn analyze_writes_reports() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.log");
    std::fs::write(
        &input,
        "081109 203615 148 INFO dfs.DataNode$PacketResponder: Received block blk_38865049064139660 of size 67108864\n\
         081109 204005 35 WARN dfs.DataNode$DataXceiver: java.io.IOException: Connection reset by peer\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = logsight(&[
        "analyze", "--input", p(&input), "--checkpoint", p(&f.checkpoint), "--out-dir", p(&out_dir), "--ig-steps", "32",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let results = std::fs::read_to_string(out_dir.join("results.tsv")).unwrap();
    assert_eq!(results.lines().count(), 3);
    assert!(results.starts_with("line_no\tverdict\tconfidence\tseverity\tevent\n"));
    for n in [1, 2] {
        let text = std::fs::read_to_string(out_dir.join(format!("line-{n:05}.txt"))).unwrap();
        assert!(text.contains("Top Attended Tokens:"), "{text}");
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out_dir.join(format!("line-{n:05}.json"))).unwrap()).unwrap();
        assert_eq!(json["line_no"], n);
        assert_eq!(json["attribution"]["steps"], 32);
    }
    assert!(!std::fs::read_dir(&out_dir).unwrap().any(|e| e.unwrap().path().to_string_lossy().ends_with(".partial")));
}

#[test]
fn corrupted_checkpoint_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("bad.json");
    std::fs::write(&ck, "{\"format\": \"logsight-checkpoint\", \"vocab\": [").unwrap();
    let input = dir.path().join("in.log");
    std::fs::write(&input, "Received block blk_1\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = logsight(&["analyze", "--input", p(&input), "--checkpoint", p(&ck), "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("logsight: "));
    assert!(!out_dir.exists());

    let json = dir.path().join("m.json");
    let data = dir.path().join("d.tsv");
    std::fs::write(&data, "0\tok\n").unwrap();
    let out = logsight(&["eval", "--data", p(&data), "--checkpoint", p(&ck), "--json", p(&json)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!json.exists());
}

#[test]
fn exit_codes() {
    let out = logsight(&["train", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    let out = logsight(&[]);
    assert_eq!(out.status.code(), Some(1));
    let out = logsight(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("gen-data"));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.tsv");
    let out = logsight(&["eval", "--data", p(&missing), "--checkpoint", p(&missing)]);
    assert_eq!(out.status.code(), Some(4));

    let data = dir.path().join("bad.tsv");
    std::fs::write(&data, "7\tnot a label\n").unwrap();
    let out = logsight(&["train", "--data", p(&data), "--out", p(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    let out = logsight(&["train", "--data", p(&data), "--out", "x", "--d-model", "10", "--num-heads", "4"]);
    assert_eq!(out.status.code(), Some(1));
}
