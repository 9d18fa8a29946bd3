use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn propnli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_propnli")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn gen_into(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["gen", "--out-dir", out];
    args.extend_from_slice(extra);
    propnli(&args)
}

#[test]
fn gen_writes_split_files_and_stats() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    let o = gen_into(&d, &["--per-bin", "10", "--max-bin", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = |f: &str| fs::read_to_string(d.join(f)).unwrap().lines().count();
    assert_eq!(lines("train.tsv") + lines("test.tsv"), 30);
    assert_eq!(lines("train.tsv"), 24);
    let stats = fs::read_to_string(d.join("stats.md")).unwrap();
    assert!(stats.contains("Majority class:"), "{stats}");
    let echo = stdout(&o);
    for key in ["seed = 42", "per_bin = 10", "max_bin = 2", "split = 0.8"] {
        assert!(echo.contains(key), "missing {key} in {echo}");
    }
}

#[test]
fn gen_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        assert!(gen_into(d, &["--per-bin", "20", "--max-bin", "4", "--seed", "7"]).status.success());
    }
    for f in ["train.tsv", "test.tsv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
}

#[test]
fn strict_gen_fails_on_exhausted_bin() {
    let tmp = tempfile::tempdir().unwrap();
    let o = gen_into(&tmp.path().join("d"), &["--per-bin", "100", "--max-bin", "0", "--strict"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error:"));
}

#[test]
fn audit_passes_fresh_data_and_names_corrupted_line() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    assert!(gen_into(&d, &["--per-bin", "10", "--max-bin", "3"]).status.success());
    let dir = d.to_str().unwrap();
    let o = propnli(&["audit", "--data-dir", dir]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("PASS"));

    let path = d.join("train.tsv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let idx = lines.iter().position(|l| l.starts_with("#\t")).expect("an independence line");
    lines[idx] = lines[idx].replacen('#', "=", 1);
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = propnli(&["audit", "--data-dir", dir]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(&format!("line {}:", idx + 1)), "{err}");
}

#[test]
fn audit_of_empty_files_passes() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("train.tsv"), "").unwrap();
    fs::write(tmp.path().join("test.tsv"), "").unwrap();
    let o = propnli(&["audit", "--data-dir", tmp.path().to_str().unwrap()]);
    assert!(o.status.success());
}

#[test]
fn audit_of_missing_directory_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let o = propnli(&["audit", "--data-dir", tmp.path().join("nope").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(o.stdout.is_empty() || stdout(&o).starts_with("command = audit"));
}

#[test]
fn rejects_unknown_model_and_cutoff() {
    assert!(!propnli(&["experiment", "--model", "gru", "--cutoff", "4"]).status.success());
    assert!(!propnli(&["experiment", "--model", "lstm", "--cutoff", "5"]).status.success());
}

#[test]
fn experiment_train_eval_and_curve_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    assert!(gen_into(&d, &["--per-bin", "12", "--max-bin", "5"]).status.success());
    let dir = d.to_str().unwrap();

    let exp = tmp.path().join("exp");
    let o = propnli(&[
        "experiment",
        "--data-dir",
        dir,
        "--model",
        "lstm",
        "--cutoff",
        "3",
        "--epochs",
        "2",
        "--out-dir",
        exp.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let echo = stdout(&o);
    assert!(echo.contains("vocabulary_size = 11"), "{echo}");
    assert!(echo.contains("lambda = 0.0001"));
    for f in ["per_bin.csv", "plot.csv", "summary.md", "model.ckpt", "config.txt"] {
        assert!(exp.join(f).exists(), "missing {f}");
    }
    let per_bin = fs::read_to_string(exp.join("per_bin.csv")).unwrap();
    assert!(per_bin.contains(",seen\n") && per_bin.contains(",generalization\n"));
    assert!(per_bin.lines().any(|l| l.starts_with("3,") && l.ends_with(",seen")));
    assert!(per_bin.lines().any(|l| l.starts_with("4,") && l.ends_with(",generalization")));

    let run = tmp.path().join("run");
    let o = propnli(&[
        "train",
        "--data-dir",
        dir,
        "--model",
        "treernn",
        "--epochs",
        "1",
        "--out-dir",
        run.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("vocabulary_size = 9"));

    let ev = tmp.path().join("ev");
    let ckpt = run.join("model.ckpt");
    let o = propnli(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data-dir",
        dir,
        "--out-dir",
        ev.to_str().unwrap(),
        "--threads",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let preds = fs::read_to_string(ev.join("predictions.tsv")).unwrap();
    let test_lines = fs::read_to_string(d.join("test.tsv")).unwrap().lines().count();
    assert_eq!(preds.lines().count(), test_lines + 1);
    assert_eq!(preds.lines().next(), Some("gold\tpredicted"));

    let cv = tmp.path().join("cv");
    let o = propnli(&[
        "curve",
        "--data-dir",
        dir,
        "--model",
        "nbow",
        "--cutoff",
        "3",
        "--epochs",
        "1",
        "--sizes",
        "5,10",
        "--out-dir",
        cv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let curve = fs::read_to_string(cv.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 3);
    assert!(curve.starts_with("size,accuracy\n5,"));

    let o = propnli(&[
        "curve",
        "--data-dir",
        dir,
        "--model",
        "nbow",
        "--cutoff",
        "3",
        "--epochs",
        "1",
        "--sizes",
        "10,5",
        "--out-dir",
        cv.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
}

#[test]
fn eval_rejects_corrupt_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    assert!(gen_into(&d, &["--per-bin", "5", "--max-bin", "1"]).status.success());
    let ckpt = tmp.path().join("bad.ckpt");
    fs::write(&ckpt, b"not a checkpoint").unwrap();
    let o = propnli(&["eval", "--checkpoint", ckpt.to_str().unwrap(), "--data-dir", d.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}
