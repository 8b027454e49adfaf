use std::process::Command;

use gcs_core::snapshot::Raster;
use gcs_station::imaging::png_bytes;
use serde_json::{json, Value};

fn gcs() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gcs"))
}

#[test]
fn config_init_and_check() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("profile.json");
    let out = gcs().args(["config", "init"]).arg(&path).output().unwrap();
    assert!(out.status.success(), "{out:?}");
    assert!(path.exists());

    let again = gcs().args(["config", "init"]).arg(&path).output().unwrap();
    assert_eq!(again.status.code(), Some(2));
    let forced = gcs().args(["config", "init", "--force"]).arg(&path).output().unwrap();
    assert!(forced.status.success());

    let check = gcs().args(["config", "check"]).arg(&path).output().unwrap();
    assert_eq!(check.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&check.stdout).contains(": ok"));
}

#[test]
fn config_check_reports_problems() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"cameras\": [}").unwrap();
    let out = gcs().args(["config", "check"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("bad.json:1:"));

    let mut v: Value = serde_json::to_value(gcs_core::config::demo_config()).unwrap();
    v["missions"][0]["tasks"][0]["action_id"] = json!("no_such_action");
    std::fs::write(&path, v.to_string()).unwrap();
    let out = gcs().args(["config", "check"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("no_such_action"));
}

#[test]
fn snapshot_measures_cracks() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("photo.png");
    std::fs::write(&image, png_bytes(&Raster::new(120, 90)).unwrap()).unwrap();
    let clicks = dir.path().join("clicks.json");
    let script = json!({
        "corners": [[10, 10], [110, 10], [110, 85], [10, 85]],
        "panel": {"width_cm": 20, "height_cm": 15},
        "target_px_per_cm": 5,
        "cracks": [{"label": "edge", "space": "image", "points": [[10, 10], [110, 10]]}]
    });
    std::fs::write(&clicks, script.to_string()).unwrap();
    let out_path = dir.path().join("out.json");
    let rect = dir.path().join("rect.png");
    let out = gcs()
        .arg("snapshot")
        .arg("--image")
        .arg(&image)
        .arg("--clicks")
        .arg(&clicks)
        .arg("--out")
        .arg(&out_path)
        .arg("--rectified")
        .arg(&rect)
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("edge: 20.00 cm"));
    let result: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let len = result["measurements"][0]["length_cm"].as_f64().unwrap();
    assert!((len - 20.0).abs() < 1e-9);
    assert!(rect.exists());
}

#[test]
fn bad_arguments_exit_with_usage_error() {
    let out = gcs().args(["serve", "--drop", "2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = gcs().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
