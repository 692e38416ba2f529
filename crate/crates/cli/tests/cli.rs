//! End-to-end checks of the CLI binary: exit codes, artifact formats and
//! report schema.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nullsurf"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nullsurf_cli_{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn invalid_config_exits_with_validation_code() {
    let dir = tmp_dir("invalid");
    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "[solve]\nresidual_tol = -1.0\n").unwrap();
    let out = bin()
        .args(["run", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn unknown_config_key_rejected() {
    let dir = tmp_dir("unknown_key");
    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "definitely_not_a_key = 1\n").unwrap();
    let out = bin()
        .args(["run", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn full_sphere_run_writes_consistent_artifacts() {
    let dir = tmp_dir("run_r3");
    let out = bin()
        .args([
            "run",
            "--target",
            "r3",
            "--resolution",
            "64",
            "--seed",
            "9",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    // The JSON report re-parses and matches the schema id.
    let report_text = std::fs::read_to_string(dir.join("sphere_report.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&report_text).unwrap();
    assert_eq!(report["schema"], "nullsurf/report/v1");
    assert_eq!(report["pass"], true);
    let target = &report["targets"][0];
    assert_eq!(target["target"], "r3");
    let mesh_vertices = target["mesh"]["vertices"].as_u64().unwrap();
    // OBJ vertex count equals the mesh vertex count.
    let c_used = target["c_used"].as_f64().unwrap();
    let obj_path = dir.join(format!("sphere_r3_c{c_used:.6}.obj"));
    let obj = std::fs::read_to_string(&obj_path).unwrap();
    let v_count = obj.lines().filter(|l| l.starts_with("v ")).count() as u64;
    let f_count = obj.lines().filter(|l| l.starts_with("f ")).count() as u64;
    assert_eq!(v_count, mesh_vertices);
    assert_eq!(f_count, target["mesh"]["faces"].as_u64().unwrap());
    // Contour figure exists.
    assert!(dir
        .join(format!("sphere_r3_c{c_used:.6}_contours.svg"))
        .exists());
}

#[test]
fn c2_run_writes_csv_rows_per_vertex() {
    let dir = tmp_dir("run_c2");
    let out = bin()
        .args([
            "run",
            "--target",
            "c2",
            "--resolution",
            "64",
            "--out",
            dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("sphere_report.json")).unwrap())
            .unwrap();
    let target = &report["targets"][0];
    let c_used = target["c_used"].as_f64().unwrap();
    let csv = std::fs::read_to_string(dir.join(format!("sphere_c2_c{c_used:.6}.csv"))).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("re1,im1,re2,im2"));
    let rows = lines.count() as u64;
    assert_eq!(rows, target["mesh"]["vertices"].as_u64().unwrap());
    // Third-coordinate periods are recorded in the report.
    assert!(target["realization"]["third_component_period_max"].is_number());
}

#[test]
fn jacobian_stage_reports_rank() {
    let out = bin()
        .args(["jacobian", "--variant", "j1"])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rows[0]["variant"], "J1");
    // Sphere default: n = 1, so J1 is 2x2 of full rank.
    assert_eq!(rows[0]["rank"], 2);
}

#[test]
fn solve_stage_emits_ramp_rows() {
    let out = bin()
        .args(["solve", "--target", "c2", "--c", "0.01"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let arr = rows.as_array().unwrap();
    assert!(!arr.is_empty());
    for row in arr {
        assert!(row["final_residual"].as_f64().unwrap() < 1e-10);
    }
}
