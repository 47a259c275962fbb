//! Output files as consumed by downstream plotting: column names, layout and
//! byte-level determinism.

use std::fs;
use std::path::Path;

use vibcontrol::eigensolver::{relax_vibrational_basis_with, RelaxOptions, VibrationalBasis};
use vibcontrol::experiments::*;
use vibcontrol::io::{read_basis, read_checkpoint, read_json, read_trajectory_csv, trajectory_header, write_basis, write_checkpoint, Checkpoint};
use vibcontrol::model::{Grid2D, GridSpec, ModelParams, Wavefunction2D};
use vibcontrol::propagator::{propagate, resume, PropagationConfig};
use vibcontrol::pulses::PulseSpec;

fn chirp_report() -> ExperimentReport {
    Runner::twolevel(LevelData::reference().unwrap())
        .run_chirp_sweep(&ChirpSweepSpec {
            nu_i: 0,
            nu_f: 2,
            a_range: ScanRange {
                start: -1.6,
                stop: -1.0,
                n: 4,
            },
            pulse: PulseConfig {
                intensity_w_cm2: 1e13,
                wavelength_nm: Some(5059.3),
                omega_au: None,
                n_cycles: 40,
                chirp_a: 0.0,
                t_start_au: 0.0,
            },
        })
        .unwrap()
}

fn header(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    text.lines().next().unwrap().split(',').map(str::to_string).collect()
}

#[test]
fn run_directory_has_documented_files_and_columns() {
    let dir = tempfile::tempdir().unwrap();
    let report = chirp_report();
    write_outputs(dir.path(), &report).unwrap();

    assert_eq!(header(&dir.path().join("points.csv")), ["index", "chirp_a", "nu", "population", "norm", "absorbed_norm"]);
    let rows = fs::read_to_string(dir.path().join("points.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 4 * 2);

    for k in 0..4 {
        let path = dir.path().join(format!("traj_{k:03}.csv"));
        assert_eq!(header(&path), trajectory_header());
        let traj = read_trajectory_csv(&path).unwrap();
        assert!(traj.len() > 10);
        assert!(traj.windows(2).all(|w| w[1].time > w[0].time));
        let last = traj.last().unwrap();
        assert!((last.populations[2] - report.points[k].population(2)).abs() < 1e-12);
        assert!(last.populations[3..].iter().all(|&p| p == 0.0));
    }

    let back: ExperimentReport = read_json(&dir.path().join("report.json")).unwrap();
    assert_eq!(back.kind, "chirp_sweep");
    assert_eq!(back.points.len(), 4);
    assert_eq!(back.derived, report.derived);
    let inputs: ExperimentSpec = serde_json::from_value(back.inputs).unwrap();
    assert_eq!(inputs.kind(), "chirp_sweep");
}

#[test]
fn same_inputs_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_outputs(a.path(), &chirp_report()).unwrap();
    write_outputs(b.path(), &chirp_report()).unwrap();
    for name in ["points.csv", "traj_000.csv", "traj_003.csv", "report.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

fn tiny() -> (Grid2D, ModelParams, VibrationalBasis) {
    let g = Grid2D::new(GridSpec {
        d_r: 0.1,
        dx: 0.4,
        r_min: 0.5,
        r_max: 6.8,
        x_min: -12.6,
        x_max: 12.6,
        absorber_width_r: 1.0,
        absorber_width_x: 2.0,
    })
    .unwrap();
    let p = ModelParams::default();
    let b = relax_vibrational_basis_with(&g, &p, 2, &RelaxOptions::default()).unwrap();
    (g, p, b)
}

#[test]
fn resumed_run_matches_uninterrupted_run_bit_for_bit() {
    let (_, p, basis) = tiny();
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("run.ckpt");
    let pulse = PulseSpec::from_lab_units(5e13, 800.0, 3);
    let full = PropagationConfig {
        observe_stride: 50,
        ..PropagationConfig::default()
    };
    let reference = propagate(&basis.states[0], &[pulse], &p, &basis, &full).unwrap();

    // same run writing checkpoints; pretend it died after the last one
    let with_ck = PropagationConfig {
        checkpoint_stride: 1000,
        checkpoint_path: Some(ck.clone()),
        ..full.clone()
    };
    let first = propagate(&basis.states[0], &[pulse], &p, &basis, &with_ck).unwrap();
    let saved = read_checkpoint(&ck).unwrap().step as usize;
    assert!(saved > 0 && saved < first.steps && first.steps - saved <= 1000);
    let rest = resume(&ck, &[pulse], &p, &basis, &full).unwrap();
    let a = &reference.final_state.amplitudes;
    let b = &rest.final_state.amplitudes;
    assert!(a.iter().zip(b.iter()).all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()));
    assert_eq!(reference.absorbed_norm.last(), rest.absorbed_norm.last());
}

#[test]
fn basis_file_round_trips_and_rejects_other_versions() {
    let (g, _, basis) = tiny();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("basis.vcb");
    write_basis(&path, &basis).unwrap();
    let back = read_basis(&path).unwrap();
    assert_eq!(back.grid, g);
    assert_eq!(back.energies, basis.energies);
    assert_eq!(back.states[1].amplitudes, basis.states[1].amplitudes);

    let mut bytes = fs::read(&path).unwrap();
    bytes[8] = 99;
    fs::write(&path, &bytes).unwrap();
    let msg = read_basis(&path).unwrap_err().to_string();
    assert!(msg.contains("version"), "{msg}");

    // a wavefunction checkpoint is not a basis file
    let ck = dir.path().join("state.ckpt");
    write_checkpoint(
        &ck,
        &Checkpoint {
            step: 0,
            time: 0.0,
            absorbed: 0.0,
            wavefunction: Wavefunction2D::zeros(&g),
        },
    )
    .unwrap();
    assert!(read_basis(&ck).is_err());
}
