use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rcisep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcisep")).args(args).output().unwrap()
}

fn generate(dir: &Path, n: usize, count: usize) -> Vec<String> {
    let out = rcisep(&["generate", "--n", &n.to_string(), "--count", &count.to_string(), "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn generate_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let files = generate(dir.path(), 10, 2);
    assert_eq!(files.len(), 2);
    let trace = dir.path().join("trace.csv");
    let out = rcisep(&["solve", "--instance", &files[0], "--separator", "exact", "--out", trace.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iteration,lb,cuts_added,sep_time_s,lp_pivots"));
    assert!(lines.next().unwrap().starts_with("0,"));
}

#[test]
fn compare_with_upper_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let files = generate(dir.path(), 8, 2);
    let name = Path::new(&files[0]).file_stem().unwrap().to_str().unwrap().to_string();
    let ub = dir.path().join("ub.txt");
    fs::write(&ub, format!("# best known\n{name},100000\n")).unwrap();
    let summary = dir.path().join("summary.csv");
    let out = rcisep(&[
        "compare",
        &files[0],
        &files[1],
        "--separators",
        "exact,greedy",
        "--ub-file",
        ub.to_str().unwrap(),
        "--out",
        summary.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(&summary).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let gap_col = headers.iter().position(|h| h == "gap_pct").unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0][gap_col].parse::<f64>().is_ok());
    assert_eq!(&rows[2][gap_col], "");
}

#[test]
fn labels_train_sepbench() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("labels.jsonl");
    let out = rcisep(&["labels", "--random", "2", "--n-min", "6", "--n-max", "7", "--out", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt = dir.path().join("policy.json");
    let out = rcisep(&["train", "--dataset", data.to_str().unwrap(), "--epochs", "1", "--checkpoint", ckpt.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ckpt.exists());
    let metrics = dir.path().join("metrics.csv");
    let out = rcisep(&[
        "sepbench",
        "--dataset",
        data.to_str().unwrap(),
        "--separators",
        "exact,neural",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        metrics.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(metrics).unwrap().lines().count(), 3);
}

#[test]
fn neural_without_checkpoint_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let files = generate(dir.path(), 6, 1);
    let out = rcisep(&["solve", "--instance", &files[0], "--separator", "neural", "--out", "t.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
}

#[test]
fn bad_invocations_exit_2() {
    assert_eq!(rcisep(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(rcisep(&["solve", "--instance", "/nonexistent.vrp", "--separator", "exact", "--out", "x"]).status.code(), Some(2));
    assert_eq!(rcisep(&["--help"]).status.code(), Some(0));
}
