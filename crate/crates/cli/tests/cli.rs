use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn asset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets").join(name)
}

fn iea(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iea")).args(args).env_remove("IEA_OUT_DIR").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn bundled_model_report_on_stdout() {
    let o = iea(&["risk", "exact", asset("paper_example.model").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let s3 = report["outcomes"].as_array().unwrap().iter().find(|o| o["outcome"] == "s3").unwrap();
    let props: Vec<f64> = s3["proportions_percent"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (got, want) in props.iter().zip([1700.0 / 91.0, 3200.0 / 91.0, 4200.0 / 91.0]) {
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn malformed_model_reports_its_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.model");
    std::fs::write(&path, "[components]\na = 0.1\nb = oops\n[outcomes]\ns1\ns2\n").unwrap();
    let o = iea(&["risk", "exact", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("bad.model:3:5"), "{err}");
}

#[test]
fn single_component_model_carries_all_blame() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.model");
    std::fs::write(
        &path,
        "[components]\nonly = 0.2\n[outcomes]\nok\nfail\n[likelihood]\nexactly_k_faults\n[blame]\nproportional\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = iea(&["risk", "exact", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("fail: P = 0.200000, responsibility 100.00%"), "{}", stdout(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("risk_report.json")).unwrap()).unwrap();
    assert_eq!(report["outcomes"][1]["proportions_percent"][0], 100.0);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn too_many_components_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wide.model");
    let comps: String = (0..30).map(|i| format!("c{i} = 0.1\n")).collect();
    std::fs::write(&path, format!("[components]\n{comps}[outcomes]\ns1\n[likelihood]\nexactly_k_faults\n")).unwrap();
    let o = iea(&["risk", "exact", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn wrong_fault_arity_is_a_usage_error() {
    let o = iea(&["sim", "run", asset("benign.toml").to_str().unwrap(), "--fault", "1111"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--fault"));
}

#[test]
fn four_probabilities_is_a_usage_error() {
    let o = iea(&["risk", "estimate", asset("benign.toml").to_str().unwrap(), "--p", "0.1,0.1,0.1,0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("expected 3 probabilities"));
}

#[test]
fn missing_scenario_is_an_input_error() {
    let o = iea(&["sim", "run", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

fn run_benign(out: &Path) -> (String, PathBuf) {
    let o = iea(&["sim", "run", asset("benign.toml").to_str().unwrap(), "--seed", "9", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("outcome s1"), "{text}");
    let hash = text.lines().find_map(|l| l.strip_prefix("hash ")).unwrap().to_string();
    (hash, out.join("trace_benign_000_9.jsonl"))
}

#[test]
fn benign_run_is_s1_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, trace_a) = run_benign(&dir.path().join("a"));
    let (b, trace_b) = run_benign(&dir.path().join("b"));
    assert_eq!(a, b);
    assert_eq!(std::fs::read(trace_a).unwrap(), std::fs::read(trace_b).unwrap());
}

#[test]
fn output_directory_defaults_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_iea"))
        .args(["sim", "run", asset("benign.toml").to_str().unwrap(), "--seed", "2"])
        .env("IEA_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("trace_benign_000_2.jsonl").exists());
}

#[test]
fn replay_accepts_fresh_and_rejects_damaged_traces() {
    let dir = tempfile::tempdir().unwrap();
    let (hash, trace) = run_benign(dir.path());
    let o = iea(&["replay", trace.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("OK") && stdout(&o).contains(&hash));

    let text = std::fs::read_to_string(&trace).unwrap();
    let truncated = dir.path().join("truncated.jsonl");
    std::fs::write(&truncated, &text[..text.len() / 3]).unwrap();
    let o = iea(&["replay", truncated.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("record"), "{}", stderr(&o));

    // Shift one vehicle forward by 40 m in a single tick.
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let index = lines.iter().enumerate().filter(|(_, l)| l.contains("\"type\":\"tick\"")).nth(30).unwrap().0;
    let mut rec: serde_json::Value = serde_json::from_str(&lines[index]).unwrap();
    let pos = rec["vehicles"][0]["pos"].as_f64().unwrap();
    rec["vehicles"][0]["pos"] = serde_json::json!(pos + 40.0);
    lines[index] = rec.to_string();
    let edited = dir.path().join("edited.jsonl");
    std::fs::write(&edited, lines.join("\n") + "\n").unwrap();
    let o = iea(&["replay", edited.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains(&format!("violation at record {index}: no_teleportation")), "{}", stdout(&o));
}

#[test]
fn gzip_traces_replay() {
    let dir = tempfile::tempdir().unwrap();
    let o =
        iea(&["sim", "run", asset("benign.toml").to_str().unwrap(), "--gzip", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let o = iea(&["replay", dir.path().join("trace_benign_000_1.jsonl.gz").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn estimate_bundle_is_consistent_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = iea(&[
            "risk",
            "estimate",
            asset("three_vehicle.toml").to_str().unwrap(),
            "--episodes",
            "20",
            "--seed",
            "5",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        out
    };
    let a = run("a");
    let b = run("b");
    for file in ["risk_report.json", "likelihood.csv", "episodes.csv", "summary.txt"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }

    let mut lik = csv::Reader::from_path(a.join("likelihood.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = lik.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 8);
    let mut total = 0;
    for r in &rows {
        let sum: f64 = (2..6).map(|i| r[i].parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        total += r[1].parse::<u64>().unwrap();
    }
    let episodes = csv::Reader::from_path(a.join("episodes.csv")).unwrap().records().count() as u64;
    assert_eq!(episodes, total);
    assert_eq!(total, 160);

    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let bytes = std::fs::read(asset("three_vehicle.toml")).unwrap();
    assert_eq!(manifest["configs"][0]["sha256"], iea_cli::sha256_hex(&bytes));
    assert_eq!(manifest["seeds"][0], 5);
}

#[test]
fn help_documents_the_schemas() {
    let o = iea(&["risk", "exact", "--help"]);
    assert!(stdout(&o).contains("[likelihood]"));
    let o = iea(&["sim", "run", "--help"]);
    assert!(stdout(&o).contains("[[mssp]]"));
}
