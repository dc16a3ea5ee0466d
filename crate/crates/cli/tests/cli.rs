use std::fs;
use std::path::Path;
use std::process::Command;

const SMALL: &str = r#"{
    "schema_version": 1,
    "wavenumber": 4.0,
    "grid": {"origin": {"x": 0.0, "y": 0.0}, "box_width": 1.0, "box_height": 1.0, "cols": 2, "rows": 1},
    "scatterers": {"kind": "explicit", "list": [{"kind": "circle", "center": {"x": 0.5, "y": 0.5}, "radius": 0.2}]},
    "discretization": {"n_per_edge": 20, "n_per_scatterer": 24, "grading": 4},
    "incident_angles": [0.0, 1.0],
    "outputs": {"far_field_points": 32, "near_field": {"x0": -0.5, "y0": -0.5, "x1": 2.5, "y1": 1.5, "nx": 7, "ny": 5}},
    "oracle": {"enabled": true, "nodes_per_scatterer": 48, "budget": 1000}
}"#;

fn schur_dd(args: &[&str], config: &Path, out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_schur-dd"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("out");
    let o = schur_dd(&["run", "--threads", "1"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "farfield_0.csv",
        "farfield_1.csv",
        "nearfield_0.grid",
        "nearfield_1.grid",
        "interfaces.csv",
        "oracle_farfield_0.csv",
        "meta.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let ff = fs::read_to_string(out.join("farfield_0.csv")).unwrap();
    assert_eq!(ff.lines().next(), Some("theta,re,im,abs,rcs_db"));
    assert_eq!(ff.lines().count(), 33);
    let grid = fs::read_to_string(out.join("nearfield_0.grid")).unwrap();
    assert!(grid.starts_with("7 5 "));
    assert_eq!(grid.lines().count(), 36);
    let iface = fs::read_to_string(out.join("interfaces.csv")).unwrap();
    assert!(iface.lines().nth(1).unwrap().starts_with("0:E,0,"));

    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["stages"]["offline_runs"], 1);
    assert_eq!(meta["stages"]["outer_factorizations"], 1);
    assert_eq!(meta["sizes"]["scatterers"], 1);
    assert_eq!(meta["content_hash"].as_str().unwrap().len(), 64);
    for r in meta["consistency"]["route_discrepancy"].as_array().unwrap() {
        assert!(r.as_f64().unwrap() < 1e-10);
    }
    for e in meta["oracle"]["far_field_error"].as_array().unwrap() {
        assert!(e.as_f64().unwrap() < 1e-4, "{e}");
    }
}

#[test]
fn failed_run_leaves_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    // the oracle budget is too small, so the failure comes after the
    // first far field has been written
    fs::write(&cfg, SMALL.replace("\"budget\": 1000", "\"budget\": 10")).unwrap();
    let out = dir.path().join("out");
    let o = schur_dd(&["run"], &cfg, &out);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("stage oracle"), "{err}");
    assert_eq!(fs::read_dir(&out).unwrap().count(), 0);
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, SMALL.replace("\"schema_version\": 1", "\"schema_version\": 9")).unwrap();
    let o = schur_dd(&["run"], &cfg, &dir.path().join("out"));
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema version"));
}

#[test]
fn cloud_gen_emits_grid_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("out");
    let o = schur_dd(&["cloud-gen"], &cfg, &out);
    assert!(o.status.success());
    let grid: schur_dd::BoxGrid = serde_json::from_str(&fs::read_to_string(out.join("cloud.json")).unwrap()).unwrap();
    assert_eq!(grid.total_scatterers(), 1);
}
