use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vibcontrol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vibcontrol"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const TINY_GRID: &str = r#"{"d_r": 0.1, "dx": 0.4, "r_min": 0.5, "r_max": 6.8, "x_min": -12.6, "x_max": 12.6,
    "absorber_width_r": 1.0, "absorber_width_x": 2.0}"#;

const CHIRP_SWEEP: &str = r#"{
  "engine": "twolevel",
  "experiment": {
    "kind": "chirp_sweep", "nu_i": 0, "nu_f": 2,
    "a_range": {"start": -1.6, "stop": -1.0, "n": 5},
    "pulse": {"intensity_w_cm2": 1e13, "wavelength_nm": 5059.3, "n_cycles": 40}
  }
}"#;

#[test]
fn field_writes_time_and_field_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = vibcontrol(&["field", "--out", out, "--intensity", "1e13", "--wavelength", "9919.9", "--cycles", "4", "--chirp", "-0.78"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("field.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time_au,field_au"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 801);
    let e0 = (1e13f64 / 3.50945e16).sqrt();
    assert!(rows.iter().all(|r| r.1.abs() <= e0));
    assert_eq!(rows[0].1, 0.0);
}

#[test]
fn run_writes_a_self_describing_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sweep.json", CHIRP_SWEEP);
    let first = dir.path().join("first");
    let o = vibcontrol(&["run", "--config", &cfg, "--out", first.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["report.json", "points.csv", "config.json", "traj_000.csv", "traj_004.csv"] {
        assert!(first.join(name).exists(), "{name}");
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(first.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["kind"], "chirp_sweep");
    assert_eq!(report["provenance"]["config_hash"].as_str().unwrap().len(), 64);

    // rerun from the embedded config into a second directory
    let second = dir.path().join("second");
    let embedded = first.join("config.json");
    let o = vibcontrol(&["run", "--config", embedded.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["points.csv", "traj_002.csv"] {
        assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(second.join(name)).unwrap());
    }
}

#[test]
fn tdse_selectivity_has_one_row_per_wavelength_and_level() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        r#"{{"engine": "tdse", "grid": {TINY_GRID}, "n_states": 3,
            "experiment": {{"kind": "selectivity", "intensity_w_cm2": 1e13, "wavelengths_nm": [3441.0, 2000.0], "n_cycles": 1}}}}"#
    );
    let cfg = write(dir.path(), "sel.json", &cfg);
    let out = dir.path().join("sel");
    let o = vibcontrol(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("points.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header, ["index", "omega_au", "target_nu", "wavelength_nm", "nu", "population", "norm", "absorbed_norm"]);
    assert_eq!(lines.count(), 2 * 3);
}

#[test]
fn eigensolve_saves_basis_and_energies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "eig.json", &format!(r#"{{"grid": {TINY_GRID}, "n_states": 2}}"#));
    let out = dir.path().join("eig");
    let o = vibcontrol(&["eigensolve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(out.join("energies.json")).unwrap()).unwrap();
    let e = doc["energies"].as_array().unwrap();
    assert_eq!(e.len(), 2);
    assert!(e[0].as_f64().unwrap() < e[1].as_f64().unwrap());
    assert!(out.join("basis.vcb").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("nu"));
}

#[test]
fn config_errors_exit_with_two_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", "{\n  \"engine\": \"twolevel\",\n  \"propagation\": {\"dt\": 0.05, \"observe_stride\": 1, \"oops\": 3}\n}");
    let o = vibcontrol(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("oops") && err.contains("propagation") && err.contains("line 3"), "{err}");

    let o = vibcontrol(&["run", "--engine", "quantum"]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write(dir.path(), "noexp.json", "{}");
    let o = vibcontrol(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_one() {
    // the scan window sits entirely above the resonance, so the peak is at its edge
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "edge.json",
        r#"{"engine": "twolevel", "experiment": {"kind": "detuning_scan", "target_nu": 2,
            "intensities_w_cm2": [1e12, 1e13], "omega_range": {"start": 0.0092, "stop": 0.011, "n": 11},
            "n_cycles": 10, "reference": "half_gap"}}"#,
    );
    let o = vibcontrol(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}
