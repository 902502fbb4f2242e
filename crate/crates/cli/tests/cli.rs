use std::path::Path;
use std::process::{Command, Output};

const NET: &str = r#"
n0 = 4
widths = [32, 32]
c_b = 0.0
c_w = 1.0
activation = { kind = "identity" }
weights = { kind = "gaussian" }
inputs = [[1.0, 1.0, 1.0, 1.0]]
"#;

const SWEEP: &str = r#"
[sweep]
width_grid = [16, 32, 64, 128]
depth = { fixed = 1 }
distances = ["kolmogorov", "wasserstein1"]
bounds = ["identity-k", "identity-w", "relu-k"]
m = 2000
seed = 5
replicates = 2
"#;

fn widenet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_widenet")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn kernel_sample_distance_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "net.toml", NET);
    let out = dir.path().to_str().unwrap();
    let k = widenet(&["kernel", "--config", &cfg]);
    assert!(k.status.success(), "{}", String::from_utf8_lossy(&k.stderr));
    let seq: serde_json::Value = serde_json::from_slice(&k.stdout).unwrap();
    assert_eq!(seq["matrices"].as_array().unwrap().len(), 2);
    assert!(widenet(&["kernel", "--config", &cfg, "--out", out]).status.success());
    assert!(widenet(&["sample", "--config", &cfg, "--m", "5000", "--seed", "3", "--out", out]).status.success());
    let batch = dir.path().join("batch.json");
    let kernel = dir.path().join("kernel.json");
    let d = widenet(&["distance", "--batch", batch.to_str().unwrap(), "--kernel", kernel.to_str().unwrap()]);
    assert!(d.status.success(), "{}", String::from_utf8_lossy(&d.stderr));
    let est: serde_json::Value = serde_json::from_slice(&d.stdout).unwrap();
    assert_eq!(est.as_array().unwrap().len(), 2);
    for e in est.as_array().unwrap() {
        assert!(e["value"].as_f64().unwrap() < 0.1);
    }
}

#[test]
fn bound_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "net.toml", NET);
    let ok = widenet(&["bound", "--config", &cfg, "--id", "identity-k", "--id", "relu-k"]);
    assert!(ok.status.success());
    let reports: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(reports[1]["value"], "inf");
    assert!(!reports[0]["factors"].as_array().unwrap().is_empty());
    let none = widenet(&["bound", "--config", &cfg, "--id", "relu-k"]);
    assert_eq!(none.status.code(), Some(2));
    let bad = widenet(&["bound", "--config", &cfg, "--id", "no-such-bound"]);
    assert_eq!(bad.status.code(), Some(1));
    let emp = widenet(&["bound", "--config", &cfg, "--id", "kdist-semi", "--mode", "empirical", "--stats-m", "2000"]);
    assert!(emp.status.success(), "{}", String::from_utf8_lossy(&emp.stderr));
}

#[test]
fn sweep_report_and_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sweep.toml", &format!("{NET}{SWEEP}"));
    let out = dir.path().join("run");
    let s = widenet(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--workers", "2", "--check"]);
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
    let again = dir.path().join("again");
    let r = widenet(&["report", "--input", out.join("sweep.json").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert!(r.status.success());
    assert_eq!(std::fs::read_to_string(again.join("sweep.csv")).unwrap(), csv);
    assert_eq!(std::fs::read(again.join("sweep.svg")).unwrap(), std::fs::read(out.join("sweep.svg")).unwrap());

    // Narrow Rademacher layers are far from Gaussian; a deflated constant must trip the check.
    let multi = NET
        .replace("inputs = [[1.0, 1.0, 1.0, 1.0]]", "inputs = [[1.0, 1.0, 1.0, 1.0], [1.0, -1.0, 0.5, 0.0]]")
        .replace(r#"kind = "gaussian""#, r#"kind = "rademacher""#)
        + &SWEEP
            .replace("[16, 32, 64, 128]", "[1, 2]")
            .replace("m = 2000", "m = 100000")
            .replace("replicates = 2", "replicates = 1")
            .replace(r#"["kolmogorov", "wasserstein1"]"#, r#"["multi-kolmogorov"]"#)
            .replace(r#"["identity-k", "identity-w", "relu-k"]"#, r#"["identity-multi-dc"]"#);
    let cfg = write(dir.path(), "multi.toml", &multi);
    let v = widenet(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--c-universal", "1e-300", "--check"]);
    assert_eq!(v.status.code(), Some(3), "{}", String::from_utf8_lossy(&v.stderr));
}
