//! End-to-end checks of the command-line interface: exit codes, JSON
//! outputs, CSV sweeps, and byte-level determinism of solve reports.

use std::path::PathBuf;
use std::process::{Command, Output};

fn narratives(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_narratives"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("narratives-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn verify_claim1_passes_with_exit_zero() {
    let out = narratives(&["verify", "claim1"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["builtin"], "claim1");
    assert_eq!(report["pass"], true);
    assert!(report["checks"].as_array().unwrap().len() >= 6);
}

#[test]
fn verify_claim2_with_k_override() {
    let out = narratives(&["verify", "claim2", "--k", "2.0"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["k"], 2.0);
    assert_eq!(report["pass"], true);
}

#[test]
fn verify_unknown_builtin_is_config_error() {
    let out = narratives(&["verify", "claim9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("claim1"));
}

#[test]
fn verify_failures_exit_one() {
    // The short-narratives oracle includes an interior-frequency check that
    // the corner-family equilibrium does not satisfy (the ay family's
    // believed success overtakes the y+a(1-y) value above alpha = 1/2); the
    // report must flag it and the process must signal verification failure.
    let out = narratives(&["verify", "short-narratives"]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pass"], false);
    let checks = report["checks"].as_array().unwrap();
    let failing: Vec<&serde_json::Value> =
        checks.iter().filter(|c| c["pass"] == false).collect();
    assert_eq!(failing.len(), 1);
    assert!(failing[0]["name"]
        .as_str()
        .unwrap()
        .contains("strictly below d*"));
}

#[test]
fn solve_builtin_to_file_and_determinism() {
    let dir = tmp_dir();
    let out1 = dir.join("claim1-a.json");
    let out2 = dir.join("claim1-b.json");
    for out in [&out1, &out2] {
        let run = narratives(&["solve", "--scenario", "claim1", "--out", out.to_str().unwrap()]);
        assert_eq!(run.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    assert_eq!(a, b, "solve reports must be byte-identical across runs");
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["schema_version"], 1);
    let solutions = report["solutions"].as_array().unwrap();
    assert_eq!(solutions.len(), 1);
    assert!((solutions[0]["alpha"].as_f64().unwrap() - 0.5858).abs() < 1e-3);
    assert_eq!(solutions[0]["kind"], "mixed");
}

#[test]
fn solve_scenario_file_round_trip() {
    let dir = tmp_dir();
    // Emit the builtin config, edit nothing, and solve it from the file.
    let solve_direct = narratives(&["solve", "--scenario", "claim2"]);
    assert_eq!(solve_direct.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&solve_direct.stdout).unwrap();
    let config = report["scenario"].clone();
    let path = dir.join("claim2.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    let from_file = narratives(&["solve", "--scenario", path.to_str().unwrap()]);
    assert_eq!(from_file.status.code(), Some(0));
    let report2: serde_json::Value = serde_json::from_slice(&from_file.stdout).unwrap();
    assert_eq!(report["solutions"], report2["solutions"]);
}

#[test]
fn solve_rejects_malformed_scenario() {
    let dir = tmp_dir();
    let path = dir.join("broken.json");
    std::fs::write(&path, r#"{"n": 3, "mu": 1.7}"#).unwrap();
    let out = narratives(&["solve", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let path2 = dir.join("bad-field.json");
    std::fs::write(
        &path2,
        r#"{"n":3,"mu":1.7,"d_star":0.5,"cost":{"kind":"quadratic","k":1.0},
           "q_set":{"generator":"corners"},"dag_set":{"enumerate":{"max_nodes":3,"action_ancestral":true}}}"#,
    )
    .unwrap();
    let out = narratives(&["solve", "--scenario", path2.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mu"));
}

#[test]
fn sweep_writes_ordered_csv() {
    let dir = tmp_dir();
    let out_path = dir.join("sweep.csv");
    let out = narratives(&[
        "sweep",
        "--scenario",
        "claim1",
        "--param",
        "k",
        "--range",
        "0.5:2.0:0.5",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&out_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "k,alpha,d_right,d_left,u_star,kind");
    assert_eq!(lines.len(), 5);
    let mut prev = f64::NEG_INFINITY;
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        let k: f64 = fields[0].parse().unwrap();
        assert!(k > prev, "rows ordered by parameter");
        prev = k;
        let alpha: f64 = fields[1].parse().unwrap();
        assert!((alpha - (2.0 - 2.0_f64.sqrt())).abs() < 1e-3);
        let d_right: f64 = fields[2].parse().unwrap();
        assert!((d_right - (0.5 + 2.0_f64.sqrt() / (8.0 * k))).abs() < 1e-3);
    }
    // Bad range syntax is a configuration error.
    let bad = narratives(&[
        "sweep", "--scenario", "claim1", "--param", "k", "--range", "1..2",
        "--out", out_path.to_str().unwrap(),
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn search_narrative_reports_corner() {
    let out = narratives(&[
        "search-narrative",
        "--dag",
        "lever",
        "--alpha",
        "0.5",
        "--mu",
        "0.5",
        "--target",
        "1",
        "--grid",
        "0.25",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["result"]["pattern"], "y + a(1-y)");
    assert!((report["result"]["value"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-4);
}

#[test]
fn linearize_chain_report() {
    let dir = tmp_dir();
    let dag_path = dir.join("dag.json");
    std::fs::write(&dag_path, r#"{"nodes":[1,2,3],"edges":[[1,2],[2,3]]}"#).unwrap();
    let dist_path = dir.join("dist.json");
    std::fs::write(
        &dist_path,
        r#"{"alpha":0.5,"mu":0.5,"q":[[1,0],[1,0],[0,1],[1,0]],"delta":1e-6}"#,
    )
    .unwrap();
    let out = narratives(&[
        "linearize",
        "--dag",
        dag_path.to_str().unwrap(),
        "--dist",
        dist_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["kind"], "path");
    assert_eq!(report["chain_node_count"], 3);
    assert!(report["chain_deviation"].as_f64().unwrap() < 1e-12);
    assert!(report["binarization"]["deviation"].as_f64().unwrap() < 1e-12);
    // An imperfect model is an unsupported structure (usage error).
    std::fs::write(&dag_path, r#"{"nodes":[1,2,3],"edges":[[1,3],[2,3]]}"#).unwrap();
    let out = narratives(&[
        "linearize",
        "--dag",
        dag_path.to_str().unwrap(),
        "--dist",
        dist_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
