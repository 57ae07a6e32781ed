//! End-to-end checks of the command-line interface: exit codes, output
//! files, and byte-identical reruns.

use std::path::Path;
use std::process::Command;

fn epcal() -> Command {
    Command::new(env!("CARGO_BIN_EXE_epcal"))
}

/// A small elastic-range problem that solves in milliseconds.
const TINY_CONFIG: &str = r#"{
  "geometry": { "type": "bar", "extents": [1.0, 2.0, 0.5], "divisions": [1, 2, 1] },
  "model": "j2",
  "beta_true": [1000.0, 0.25, 2.0, 100.0, 0.0, 0.0],
  "beta_init": [1050.0, 0.27, 2.0, 100.0, 0.0, 0.0],
  "lower": [900.0, 0.2, 0.0, 90.0, 0.0, 0.0],
  "upper": [1200.0, 0.4, 10.0, 150.0, 0.0, 0.0],
  "active": [true, true, false, false, false, false],
  "load": { "kind": "uniaxial_ramp", "steps": 2, "scale": 0.0005 },
  "noise": { "eps": 0.0, "seed": 3 },
  "gradient_method": "adjoint",
  "optimizer": { "memory": 10, "gtol_rel": 1e-12, "c1": 1e-4, "max_iterations": 80, "max_backtracks": 60 }
}"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn forward_writes_fields_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY_CONFIG);
    let out = dir.path().join("out");
    let status = epcal()
        .args(["forward", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    // virgin state plus one file per load step
    for n in 0..=2 {
        assert!(out.join(format!("step_{n:03}.vtk")).exists(), "missing step {n}");
    }
    assert!(out.join("diagnostics.json").exists());
    assert!(out.join("resolved_config.json").exists());

    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("diagnostics.json")).unwrap())
            .unwrap();
    assert_eq!(diag["steps"].as_array().unwrap().len(), 2);
    assert!(diag["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn malformed_config_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let bad = TINY_CONFIG.replace("\"model\"", "\"modle\"");
    let config = write_config(dir.path(), &bad);
    let output = epcal()
        .args(["forward", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("modle"), "stderr should name the bad key: {stderr}");
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY_CONFIG);
    let read = |out: &Path| {
        (
            std::fs::read(out.join("diagnostics.json")).unwrap(),
            std::fs::read(out.join("step_002.vtk")).unwrap(),
        )
    };
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for out in [&out1, &out2] {
        let status = epcal()
            .args(["forward", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(read(&out1), read(&out2));
}

#[test]
fn synth_resolves_noise_floor_in_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let with_floor = TINY_CONFIG.replace(
        r#""noise": { "eps": 0.0, "seed": 3 }"#,
        r#""noise": { "eps": "floor", "seed": 3 }"#,
    );
    let config = write_config(dir.path(), &with_floor);
    let out = dir.path().join("out");
    let status = epcal()
        .args(["synth", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let data: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("data.json")).unwrap()).unwrap();
    // L_y = 2: the resolved floor is 0.05 * 2 / (0.8 * 2048)
    let eps = data["eps_noise"].as_f64().unwrap();
    assert!((eps - 6.103515625e-5).abs() < 1e-12, "eps = {eps}");
}

#[test]
fn synth_with_zero_noise_reproduces_forward_displacements() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY_CONFIG);
    let out = dir.path().join("out");
    assert!(epcal()
        .args(["synth", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let data: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("data.json")).unwrap()).unwrap();
    // reruns with the same seed are identical
    let out2 = dir.path().join("out2");
    assert!(epcal()
        .args(["synth", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out2)
        .status()
        .unwrap()
        .success());
    let data2: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out2.join("data.json")).unwrap()).unwrap();
    assert_eq!(data, data2);
    // displacement magnitudes are physical (top face pulled in +y)
    let steps = data["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 2);
}

#[test]
fn gradcheck_writes_thirteen_rows() {
    let dir = tempfile::tempdir().unwrap();
    let with_gradcheck = TINY_CONFIG.replace(
        r#""gradient_method": "adjoint","#,
        r#""gradient_method": "adjoint", "gradcheck": { "direction": 0.1, "decades": 13 },"#,
    );
    let config = write_config(dir.path(), &with_gradcheck);
    let out = dir.path().join("out");
    let status = epcal()
        .args(["gradcheck", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("vcurve.csv")).unwrap();
    let lines: Vec<&str> = csv.trim().lines().collect();
    assert_eq!(lines[0], "eps,error_fs,error_adjoint");
    assert_eq!(lines.len(), 14, "13 data rows expected");
}

#[test]
fn calibrate_recovers_on_tiny_problem() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), TINY_CONFIG);
    let out = dir.path().join("out");
    let status = epcal()
        .args(["calibrate", "--method", "adjoint", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("calibration.json")).unwrap())
            .unwrap();
    let params = report["parameters"].as_array().unwrap();
    for p in params.iter().filter(|p| p["active"].as_bool().unwrap()) {
        let rel = p["relative_error"].as_f64().unwrap();
        assert!(rel < 1e-3, "parameter {} recovered to {rel:e}", p["name"]);
    }
    assert!(out.join("history.csv").exists());
    assert!(out.join("optrun.json").exists());
}

#[test]
fn shipped_configs_are_valid() {
    let config_dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join("configs");
    let mut checked = 0;
    for entry in std::fs::read_dir(config_dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let status = epcal()
                .args(["mesh", "--config"])
                .arg(&path)
                .arg("--out")
                .arg(tempfile::tempdir().unwrap().path().join("out"))
                .status()
                .unwrap();
            assert!(status.success(), "config {} failed", path.display());
            checked += 1;
        }
    }
    assert!(checked >= 4);
}
