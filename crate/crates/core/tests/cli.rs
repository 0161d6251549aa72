use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use memsd::device;
use memsd::harness::{DeviceSpec, Scenario};
use memsd::io::{self, Table};

fn memsd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memsd"))
        .args(args)
        .env_remove("MEMSD_OUT")
        .output()
        .unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn files_with_extension(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext) && p.file_stem().unwrap() != "report")
        .collect();
    out.sort();
    out
}

#[test]
fn presets_print_as_json() {
    let out = memsd(&["presets"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for name in device::PRESET_NAMES {
        assert!(v.get(name).is_some(), "{name} missing");
    }
}

#[test]
fn doubling_output_is_deterministic_and_readable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = memsd(&[
            "double",
            "--preset",
            "beam-455kHz",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}{}", text(&out.stdout), text(&out.stderr));
        let stdout = text(&out.stdout);
        assert!(stdout.contains("PASS doubling-lock"), "{stdout}");
        assert!(stdout.contains("info: bench measurements"), "{stdout}");
    }
    let da = a.path().join("beam-455kHz");
    let db = b.path().join("beam-455kHz");
    let csv = files_with_extension(&da, "csv");
    assert_eq!(csv.len(), 2, "{csv:?}");
    for p in &csv {
        let q = db.join(p.file_name().unwrap());
        assert_eq!(
            std::fs::read(p).unwrap(),
            std::fs::read(&q).unwrap(),
            "{} differs",
            p.display()
        );
    }
    let tr = Table::read_expecting(&da.join("doubler_trajectory.csv"), &io::TRAJECTORY_HEADERS).unwrap();
    assert!(tr.rows() > 1 << 15);
    let t = tr.column("t_s").unwrap();
    assert!(t.windows(2).all(|w| w[1] > w[0]));
    let spectrum = Table::read_expecting(&da.join("output_spectrum.csv"), &io::SPECTRUM_HEADERS).unwrap();
    assert!(spectrum.rows() > 1000);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(da.join("report.json")).unwrap()).unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert!(checks
        .iter()
        .all(|c| c["criterion"].is_string() && c["passed"].is_boolean()));
}

#[test]
fn modal_tables_in_json_format() {
    let dir = tempfile::tempdir().unwrap();
    let out = memsd(&[
        "modal",
        "--preset",
        "beam-1MHz",
        "--format",
        "json",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let d = dir.path().join("beam-1MHz");
    let shape = Table::read_expecting(&d.join("mode_shape_1.json"), &io::MODE_SHAPE_HEADERS).unwrap();
    let phi = shape.column("phi").unwrap();
    assert_eq!(phi[0], 0.0);
    assert!((phi[phi.len() - 1] - 1.0).abs() < 1e-12);
    let fem = Table::read_expecting(&d.join("fem_mode_1.json"), &io::FEM_HEADERS).unwrap();
    assert_eq!(fem.rows(), 33);
}

#[test]
fn slenderness_violation_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = device::preset("beam-455kHz").unwrap();
    cfg.beam.thickness = 0.3 * cfg.beam.length;
    let mut s = Scenario::from_preset("beam-455kHz").unwrap();
    s.name = "stubby".into();
    s.device = DeviceSpec::Inline(cfg);
    let path = dir.path().join("stubby.json");
    std::fs::write(&path, serde_json::to_string(&s).unwrap()).unwrap();
    let out = memsd(&[
        "modal",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("slender"), "{}", text(&out.stderr));
}

#[test]
fn bad_inputs_exit_with_two() {
    let out = memsd(&["modal", "--preset", "beam-2MHz"]);
    assert_eq!(out.status.code(), Some(2));
    let out = memsd(&["modal"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.json");
    let out = memsd(&["pullin", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"name": "x", "device": {"preset": "beam-1MHz"}, "typo": 1}"#).unwrap();
    let out = memsd(&["pullin", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = memsd(&["double", "--preset", "beam-1MHz", "--vamp", "-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn excessive_drive_exits_with_one_and_a_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    let out = memsd(&[
        "double",
        "--preset",
        "beam-455kHz",
        "--vamp",
        "300",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        text(&out.stderr).contains("retry with v_amp below"),
        "{}",
        text(&out.stderr)
    );
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_memsd"))
        .args(["pullin", "--preset", "beam-1MHz"])
        .env("MEMSD_OUT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(dir.path().join("beam-1MHz/report.json").exists());
}

#[test]
fn consolidated_report_for_both_presets() {
    let dir = tempfile::tempdir().unwrap();
    let out = memsd(&["report", "--out", dir.path().to_str().unwrap()]);
    let stdout = text(&out.stdout);
    assert!(out.status.success(), "{stdout}{}", text(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert_eq!(
        table,
        stdout
            .lines()
            .take_while(|l| !l.starts_with("wrote"))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    );
    for name in device::PRESET_NAMES {
        let row = table.lines().find(|l| l.starts_with(name)).unwrap();
        assert!(row.trim_end().ends_with("ok"), "{row}");
    }
    assert!(table.contains("informational"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn report_row_failure_leaves_other_rows() {
    let dir = tempfile::tempdir().unwrap();
    let good = Scenario::from_preset("beam-1MHz").unwrap();
    let mut bad = Scenario::from_preset("beam-455kHz").unwrap();
    bad.name = "overdriven".into();
    bad.drive.v_amp = 300.0;
    let path = dir.path().join("mixed.json");
    std::fs::write(&path, serde_json::to_string(&vec![good, bad]).unwrap()).unwrap();
    let out = memsd(&[
        "report",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = text(&out.stdout);
    assert!(
        stdout
            .lines()
            .any(|l| l.starts_with("beam-1MHz") && l.trim_end().ends_with("ok")),
        "{stdout}"
    );
    assert!(
        stdout
            .lines()
            .any(|l| l.starts_with("overdriven") && l.contains("FAILED")),
        "{stdout}"
    );
}
