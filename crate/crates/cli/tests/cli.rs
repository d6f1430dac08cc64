use std::path::{Path, PathBuf};
use std::process::Command;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn cim(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cim"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("cim runs")
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

#[test]
fn solve_toy_writes_six_rows_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("toy_config.json");
    let out = cim(&["solve", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("thresholds.csv")).unwrap();
    assert_eq!(data_rows(&csv).len(), 6);
    for name in ["thresholds.csv", "order_tree.json", "order_tree.dot", "solve_trace.json"] {
        let body = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(body.contains("chacha20"), "{name} lacks rng id");
        assert!(body.contains("\"seed\""), "{name} lacks config echo");
    }
    let tree: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("order_tree.json")).unwrap()).unwrap();
    assert!(tree["meta"]["version"].is_string());
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("toy_config.json");
    let out = cim(&["solve", "--config", cfg.to_str().unwrap(), "--cost", "0.3"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("thresholds.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains("\"cost\":0.3"));
}

#[test]
fn simulate_is_deterministic_across_thread_counts() {
    let g = fixture("toy.edges");
    let run = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let args = ["simulate", "--graph", g.to_str().unwrap(), "--tasks", "2000", "--seed", "11", "--threads", threads];
        let out = cim(&args, dir.path());
        assert_eq!(out.status.code(), Some(0));
        let csv = std::fs::read_to_string(dir.path().join("tasks.csv")).unwrap();
        // drop the config echo, which records the thread count
        csv.lines().skip(1).collect::<Vec<_>>().join("\n")
    };
    let a = run("1");
    assert_eq!(a, run("1"));
    assert_eq!(a, run("4"));
    assert_eq!(a.lines().filter(|l| !l.starts_with('#')).count(), 2001);
}

#[test]
fn missing_graph_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = cim(&["solve", "--graph", "/definitely/not/here.edges"], &out_dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let g = fixture("toy.edges");
    for args in [
        vec!["solve", "--graph", g.to_str().unwrap(), "--cost", "2"],
        vec!["solve", "--graph", g.to_str().unwrap(), "--dist", "normal"],
        vec!["solve", "--graph", g.to_str().unwrap(), "--requester", "99"],
        vec!["solve", "--no-such-flag"],
    ] {
        let out = cim(&args, &dir.path().join("o"));
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    assert!(!dir.path().join("o").exists());
}

#[test]
fn verify_toy_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    let g = fixture("toy.edges");
    let out = cim(&["verify", "--graph", g.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(v["data"]["violated"], 0);
    let one = cim(&["verify", "--graph", g.to_str().unwrap(), "--agent", "2"], dir.path());
    assert_eq!(one.status.code(), Some(0));
}

#[test]
fn baseline_and_dynamics_run() {
    let dir = tempfile::tempdir().unwrap();
    let g = fixture("toy.edges");
    let out = cim(&["baseline", "--graph", g.to_str().unwrap(), "--tasks", "500", "--degree", "5"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        data_rows(&std::fs::read_to_string(dir.path().join("baseline_tasks.csv")).unwrap()).len(),
        500
    );
    let out = cim(&["dynamics", "--graph", g.to_str().unwrap(), "--tasks", "50"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("dynamics.csv")).unwrap();
    assert_eq!(data_rows(&csv).len(), 8);
}
