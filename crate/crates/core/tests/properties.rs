use std::f64::consts::PI;

use num_complex::Complex64 as C;
use proptest::prelude::*;

use vibcontrol::io::{read_checkpoint, read_trajectory_csv, write_checkpoint, write_rows, Checkpoint, TrajectoryRow};
use vibcontrol::model::{apply_hamiltonian, build_potential, Grid2D, GridSpec, ModelParams, Wavefunction2D};
use vibcontrol::propagator::AdiStepper;
use vibcontrol::pulses::*;
use vibcontrol::tridiag::thomas;
use vibcontrol::twolevel::{integrate_levels, IntegratorOptions, LevelSystem};

fn tiny() -> Grid2D {
    Grid2D::new(GridSpec {
        d_r: 0.15,
        dx: 0.5,
        r_min: 0.5,
        r_max: 5.0,
        x_min: -8.0,
        x_max: 8.0,
        absorber_width_r: 1.0,
        absorber_width_x: 2.0,
    })
    .unwrap()
}

fn packet(g: &Grid2D, k: f64, r0: f64) -> Wavefunction2D {
    let mut w = Wavefunction2D::from_fn(g, |r, x| C::from_polar((-(r - r0).powi(2) * 2.0 - x * x / 3.0).exp(), k * (x + r)));
    w.normalize();
    w
}

fn pulse_strategy() -> impl Strategy<Value = PulseSpec> {
    (1e10f64..5e13, 1000.0f64..12000.0, 1u32..60, -3.0f64..3.0, -500.0f64..500.0)
        .prop_map(|(i, l, n, a, t0)| PulseSpec::from_lab_units(i, l, n).with_chirp(a).starting_at(t0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn potential_is_even_in_x(x in -40.0f64..40.0, r in 0.05f64..18.0, ae in 0.1f64..3.0, ap in 0.01f64..1.0) {
        let p = ModelParams { mu_p: 918.0, alpha_e: ae, alpha_p: ap };
        prop_assert_eq!(p.potential(x, r), p.potential(-x, r));
    }

    #[test]
    fn unit_conversions_invert(i in 1e8f64..1e16, l in 100.0f64..20000.0) {
        prop_assert!((field_to_intensity(intensity_to_field(i)) / i - 1.0).abs() < 1e-12);
        prop_assert!((omega_to_wavelength(wavelength_to_omega(l)) / l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn field_stays_inside_envelope_and_support(p in pulse_strategy(), u in -0.2f64..1.2) {
        let t = p.t_start + u * p.duration();
        prop_assert!(p.field_at(t).abs() <= p.envelope(t) + 1e-15);
        if !(0.0..=1.0).contains(&u) {
            prop_assert_eq!(p.field_at(t), 0.0);
        }
    }

    #[test]
    fn chirp_leaves_envelope_and_area_alone(p in pulse_strategy(), u in 0.0f64..1.0) {
        let t = p.t_start + u * p.duration();
        let flat = p.with_chirp(0.0);
        prop_assert_eq!(p.envelope(t), flat.envelope(t));
        prop_assert_eq!(p.total_area(), flat.total_area());
    }

    #[test]
    fn stark_area_grows_to_the_closed_form_total(p in pulse_strategy(), u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let (lo, hi) = if u < v { (u, v) } else { (v, u) };
        let d = p.duration();
        prop_assert!(p.stark_area(p.t_start + lo * d) <= p.stark_area(p.t_start + hi * d) + 1e-18);
        if p.n_cycles >= 2 {
            let closed = 3.0 / 16.0 * p.e0 * p.e0 * p.n_cycles as f64 * p.period();
            prop_assert!((p.total_area() / closed - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn locked_spacing_is_phase_matched(req in 100.0f64..1e5, de in 1e-3f64..0.05, extra in -20.0f64..20.0) {
        let s = locked_spacing(req, de, extra);
        prop_assert!(s >= req);
        prop_assert!(s < req + 2.0 * PI / de + 1e-9 * req);
        let turns = (de * s + extra) / (2.0 * PI);
        prop_assert!((turns - turns.round()).abs() < 1e-8);
    }

    #[test]
    fn focal_weights_cover_the_disc(w0 in 0.1f64..10.0, n in 1u32..64) {
        let beam = BeamProfile { w0, i_peak: 1e13, n_rings: n };
        let s = focal_samples(&beam);
        let total: f64 = s.iter().map(|x| x.weight).sum();
        prop_assert!((total / (PI * beam.r_max().powi(2)) - 1.0).abs() < 1e-12);
        prop_assert_eq!(s[0].intensity, 1e13);
        for w in s.windows(2) {
            prop_assert!(w[1].intensity < w[0].intensity);
        }
    }

    #[test]
    fn thomas_solution_satisfies_the_system(n in 2usize..40, seed in 0u64..1000) {
        let f = |k: usize, s: f64| ((k as f64 + 1.0) * (seed as f64 + s)).sin();
        let lower: Vec<f64> = (0..n).map(|k| f(k, 0.1)).collect();
        let upper: Vec<f64> = (0..n).map(|k| f(k, 0.2)).collect();
        let diag: Vec<f64> = (0..n).map(|k| 3.0 + f(k, 0.3)).collect();
        let b: Vec<f64> = (0..n).map(|k| f(k, 0.4)).collect();
        let mut x = b.clone();
        let mut scratch = vec![0.0; n];
        thomas(&lower, &diag, &upper, &mut x, &mut scratch);
        for i in 0..n {
            let mut r = diag[i] * x[i];
            if i > 0 { r += lower[i] * x[i - 1]; }
            if i + 1 < n { r += upper[i] * x[i + 1]; }
            prop_assert!((r - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn reduced_model_conserves_norm(mu in 0.0f64..3.0, d0 in -3.0f64..3.0, d1 in -3.0f64..3.0, gap in 0.005f64..0.03, a in -2.0f64..2.0) {
        let sys = LevelSystem { energies: vec![0.0, gap], mu2: vec![vec![d0, mu], vec![mu, d1]] };
        let p = PulseSpec::new(intensity_to_field(1e13), 0.5 * gap, 20).with_chirp(a);
        let s = integrate_levels(&sys, &[p], &[C::new(1.0, 0.0), C::new(0.0, 0.0)], 0.0, &IntegratorOptions::default()).unwrap();
        let n: f64 = s.final_amplitudes().iter().map(|c| c.norm_sqr()).sum();
        prop_assert!((n - 1.0).abs() < 1e-8);
    }

    #[test]
    fn csv_rows_reload_to_twelve_digits(vals in proptest::collection::vec(-1e3f64..1e3, 10)) {
        let dir = tempfile::tempdir().unwrap();
        let row = TrajectoryRow { time: vals[0], populations: vals[1..8].to_vec(), norm: vals[8], absorbed: vals[9] };
        let path = dir.path().join("t.csv");
        write_rows(&path, std::slice::from_ref(&row)).unwrap();
        let back = read_trajectory_csv(&path).unwrap();
        let pairs = [(row.time, back[0].time), (row.norm, back[0].norm), (row.absorbed, back[0].absorbed)];
        for (a, b) in pairs.into_iter().chain(row.populations.iter().copied().zip(back[0].populations.iter().copied())) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn hamiltonian_is_hermitian(e in -0.1f64..0.1, k1 in -2.0f64..2.0, k2 in -2.0f64..2.0) {
        let g = tiny();
        let p = ModelParams::default();
        let v = build_potential(&g, &p).unwrap();
        let a = packet(&g, k1, 2.0);
        let b = packet(&g, k2, 2.6);
        let lhs = a.inner(&apply_hamiltonian(&b, &v, &p, e).unwrap()).unwrap();
        let rhs = apply_hamiltonian(&a, &v, &p, e).unwrap().inner(&b).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
    }

    #[test]
    fn parity_maps_field_to_minus_field(e in -0.1f64..0.1, k in -2.0f64..2.0) {
        let g = tiny();
        let p = ModelParams::default();
        let v = build_potential(&g, &p).unwrap();
        let a = packet(&g, k, 2.0);
        let lhs = apply_hamiltonian(&a.flip_x(), &v, &p, e).unwrap();
        let rhs = apply_hamiltonian(&a, &v, &p, -e).unwrap().flip_x();
        let d: f64 = lhs.amplitudes.iter().zip(rhs.amplitudes.iter()).map(|(x, y)| (x - y).norm_sqr()).sum();
        prop_assert!(d.sqrt() < 1e-12);
    }

    #[test]
    fn corrected_steps_preserve_norm(fields in proptest::collection::vec(-0.05f64..0.05, 1..30), k in -1.0f64..1.0) {
        let g = tiny();
        let st = AdiStepper::new(&g, &ModelParams::default(), 0.05).unwrap();
        let mut ws = st.workspace();
        let mut psi = packet(&g, k, 2.0);
        for &e in &fields {
            st.step(&mut psi.amplitudes, e, 4, &mut ws);
        }
        prop_assert!((psi.norm_sqr() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn checkpoints_round_trip_exactly(step in 0u64..1_000_000, time in -1e6f64..1e6, k in -3.0f64..3.0) {
        let g = tiny();
        let dir = tempfile::tempdir().unwrap();
        let ck = Checkpoint { step, time, absorbed: 1e-3, wavefunction: packet(&g, k, 2.2) };
        let path = dir.path().join("c.ckpt");
        write_checkpoint(&path, &ck).unwrap();
        let back = read_checkpoint(&path).unwrap();
        prop_assert_eq!(back.step, step);
        prop_assert_eq!(back.time.to_bits(), time.to_bits());
        for (a, b) in ck.wavefunction.amplitudes.iter().zip(back.wavefunction.amplitudes.iter()) {
            prop_assert_eq!(a.re.to_bits(), b.re.to_bits());
            prop_assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }
}
