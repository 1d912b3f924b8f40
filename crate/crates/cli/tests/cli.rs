use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn randmi(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_randmi"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn bounds_table_reproduces_reference_sizes() {
    let dir = TempDir::new().unwrap();
    let o = randmi(
        &["bounds", "--m-theta", "13", "--n", "11", "--zip", "--epsilon", "0.2,0.1,0.05", "--delta", "1e-2,1e-4,1e-6"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let file = std::fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    assert_eq!(stdout, file);
    let strict: Vec<u64> = file
        .lines()
        .skip(1)
        .filter(|l| l.contains(",strict,"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(strict, vec![35835, 81236, 181604]);
    assert_eq!(file.lines().count(), 7);
    let m = read_json(&dir.path().join("manifest.json"));
    assert_eq!(m["subcommand"], "bounds");
}

#[test]
fn bounds_from_bundled_problem() {
    let dir = TempDir::new().unwrap();
    let o = randmi(&["bounds", "--problem", "@manipulator"], dir.path());
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("0.2,0.01,0,13,11,strict,269.4005"));
    assert_eq!(read_json(&dir.path().join("manifest.json"))["inputs"][0]["path"], "@manipulator");
}

#[test]
fn sequential_then_audit() {
    let dir = TempDir::new().unwrap();
    let o = randmi(&["--seed", "5", "sequential", "@testbed", "--repeats", "2", "--k-t", "5"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["run-000.jsonl", "run-000.json", "run-001.jsonl", "run-001.json", "summary.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "2");
    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["seeds"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["config"]["run"]["k_t"], 5);

    let outcome = dir.path().join("run-000.json");
    let audit_dir = dir.path().join("audit");
    let o = randmi(&["audit", outcome.to_str().unwrap(), "@testbed", "--m", "500"], &audit_dir);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&audit_dir.join("audit.json"));
    assert_eq!(report["estimate"]["samples"], 500);
}

#[test]
fn sequential_is_reproducible() {
    let logs: Vec<Vec<String>> = (0..2)
        .map(|_| {
            let dir = TempDir::new().unwrap();
            let o = randmi(&["--seed", "11", "sequential", "@testbed"], dir.path());
            assert!(o.status.success());
            let v = read_json(&dir.path().join("run-000.json"));
            v["log"]
                .as_array()
                .unwrap()
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    r["wall_secs"] = Value::from(0.0);
                    r.to_string()
                })
                .collect()
        })
        .collect();
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn solve_writes_design_and_result() {
    let dir = TempDir::new().unwrap();
    let o = randmi(&["solve", "@testbed", "--samples", "100"], dir.path());
    assert!(o.status.success());
    let r = read_json(&dir.path().join("solve.json"));
    assert_eq!(r["samples"], 100);
    assert_eq!(r["result"]["status"], "optimal");
    let csv = std::fs::read_to_string(dir.path().join("design.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101);
}

#[test]
fn infeasible_problem_exits_4() {
    let dir = TempDir::new().unwrap();
    let problem = dir.path().join("p.json");
    std::fs::write(
        &problem,
        r#"{
  "name": "infeasible",
  "parameters": [{"name": "q", "nominal": 0.5, "lower": 0.0, "upper": 1.0}],
  "variables": [{"name": "x", "kind": "scalar", "bound": 1.0}],
  "objective": {"x": 1.0},
  "blocks": [{"name": "b", "dim": 1, "strictness": "strict",
              "entries": {"0,0": "x - 2 - q"}}]
}"#,
    )
    .unwrap();
    let o = randmi(&["solve", problem.to_str().unwrap(), "--samples", "10"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn exit_codes_for_bad_input() {
    let dir = TempDir::new().unwrap();
    let missing = randmi(&["validate-file", "/nonexistent/p.json"], dir.path());
    assert_eq!(missing.status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"name": "x", "parameters": [], "variables": [], "blocks": [], "extra": 1}"#).unwrap();
    assert_eq!(randmi(&["validate-file", bad.to_str().unwrap()], dir.path()).status.code(), Some(3));

    assert_eq!(randmi(&["bounds", "--epsilon", "1.5", "--m-theta", "1", "--n", "1"], dir.path()).status.code(), Some(2));
    assert_eq!(randmi(&["bounds"], dir.path()).status.code(), Some(2));
    assert_eq!(randmi(&["sequential", "@testbed", "--k-t", "1"], dir.path()).status.code(), Some(2));
    assert_eq!(randmi(&["solve", "@nothing"], dir.path()).status.code(), Some(2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "seed = 42\n[levels]\nepsilon = 0.3\ndelta = 0.05\n[sequential]\nk_t = 4\n").unwrap();
    let o = randmi(&["--config", cfg.to_str().unwrap(), "sequential", "@testbed", "--k-t", "6"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = read_json(&dir.path().join("run-000.json"));
    assert_eq!(run["k_t"], 6);
    assert_eq!(run["levels"]["epsilon"], 0.3);
    let m = read_json(&dir.path().join("manifest.json"));
    assert_eq!(m["config"]["run"]["seed"], 42);

    std::fs::write(&cfg, "sed = 1\n").unwrap();
    let o = randmi(&["--config", cfg.to_str().unwrap(), "bounds", "--m-theta", "1", "--n", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
