use std::path::Path;
use std::process::Command;

fn dgmix() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dgmix"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let cfg = r#"{
  "dataset": {
    "kind": "synthetic",
    "family": "rotated-gaussians",
    "source_angles": [0.0, 30.0, 60.0],
    "target_angle": 33.0,
    "convex": true,
    "mixture": [0.2, 0.5, 0.3],
    "noise": 0.5,
    "samples_per_domain": 100,
    "classes": 4,
    "seed": 0
  },
  "epochs": 4,
  "seeds": [0, 1]
}"#;
    let path = dir.join("config.json");
    std::fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn run_writes_result_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    let status = dgmix()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--seed", "3", "--alpha", "0.5", "--B", "2", "--diag", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for f in ["results.csv", "results.jsonl", "report.md", "diag.jsonl"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let stdout = String::from_utf8(status.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.contains("seed=3"));
    let diag = std::fs::read_to_string(out.join("diag.jsonl")).unwrap();
    assert!(diag.lines().next().unwrap().contains("\"set\":\"vald\""));
}

#[test]
fn run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    for name in ["a", "b"] {
        let ok = dgmix()
            .args(["run", "--method", "coral", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(name))
            .output()
            .unwrap();
        assert!(ok.status.success());
    }
    for f in ["results.csv", "results.jsonl", "report.md", "diag.jsonl"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn sweep_component_axis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("sweep");
    let res = dgmix()
        .args(["sweep", "--axis", "component", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
    let md = std::fs::read_to_string(out.join("report.md")).unwrap();
    for c in ["vanilla", "+optd", "+vald", "+both"] {
        assert!(md.contains(&format!("| {c} |")), "{c}");
    }
}

#[test]
fn diverge_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("div");
    let res = dgmix()
        .args(["diverge", "--seed", "0", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("diverge.json")).unwrap()).unwrap();
    let entry = &v["seed0/33deg"];
    assert!(entry["divergence"]["pairs"]["source0|source1"]["proxy_a_distance"].is_number());
    assert!(entry["vald_to_target"]["proxy_a_distance"].is_number());
}

#[test]
fn invalid_config_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"epochs": 0, "batch_per_domain": 1, "alpha": -1.0}"#).unwrap();
    let res = dgmix().args(["run", "--config"]).arg(&path).output().unwrap();
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    for needle in ["epochs", "batch_per_domain", "alpha"] {
        assert!(err.contains(needle), "{err}");
    }
}

#[test]
fn rejects_ws_without_per_source_method() {
    let res = dgmix().args(["run", "--grad-mode", "w-s", "--epochs", "1"]).output().unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("erm-per-source"));
}
