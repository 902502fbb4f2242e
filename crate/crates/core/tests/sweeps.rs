//! End-to-end sweeps from a config file.

use widenet_core::experiment::{emit_report, run_sweep, run_sweep_with, ReportFormat, SweepResult, SweepSpec};

const SPEC: &str = r#"
n0 = 3
widths = [8]
c_b = 0.2
c_w = 1.0
activation = { kind = "relu" }
weights = { kind = "gaussian" }
inputs = [[1.0, -0.4, 0.7], [0.2, 0.9, -1.0]]

[sweep]
width_grid = [16, 32, 64, 128]
depth = { fixed = 2 }
distances = ["kolmogorov", "wasserstein1", "multi-kolmogorov", "halfspace"]
bounds = ["finale-uno", "pres-sec-prob", "relu-k", "relu-w"]
m = 4000
seed = 11
replicates = 2
"#;

fn spec() -> SweepSpec {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.toml");
    std::fs::write(&path, SPEC).unwrap();
    SweepSpec::load(&path).unwrap()
}

#[test]
fn identical_specs_give_identical_reports() {
    let s = spec();
    let a = run_sweep(&s).unwrap();
    let b = run_sweep_with(&s, 3, &|_| {}).unwrap();
    assert_eq!(a, b);
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for f in ReportFormat::ALL {
        let pa = emit_report(&a, f, da.path()).unwrap();
        let pb = emit_report(&b, f, db.path()).unwrap();
        assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
    }
}

#[test]
fn report_shapes() {
    let r = run_sweep(&spec()).unwrap();
    assert_eq!(r.rows.len(), 8);
    assert!(r.rows.windows(2).all(|w| (w[0].n, w[0].replicate) < (w[1].n, w[1].replicate)));
    assert_eq!(r.rate_fits.len(), 4);
    let dir = tempfile::tempdir().unwrap();
    let csv = std::fs::read_to_string(emit_report(&r, ReportFormat::Csv, dir.path()).unwrap()).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("n,L,replicate,kolmogorov,wasserstein1,multi-kolmogorov,halfspace,finale-uno"));
    assert_eq!(csv.lines().count(), 9);
    let svg = std::fs::read_to_string(emit_report(&r, ReportFormat::Svg, dir.path()).unwrap()).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 8);
    let json = std::fs::read_to_string(emit_report(&r, ReportFormat::Json, dir.path()).unwrap()).unwrap();
    assert_eq!(SweepResult::from_json(&json).unwrap(), r);
}

#[test]
fn inapplicable_bounds_do_not_stop_the_sweep() {
    let r = run_sweep(&spec()).unwrap();
    for row in &r.rows {
        // Every requested column is present, finite or not.
        assert_eq!(row.bounds.len(), 4);
        assert!(row.errors.is_empty(), "{:?}", row.errors);
    }
    assert!(!r.all_bounds_infinite());
}
